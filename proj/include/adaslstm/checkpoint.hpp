#pragma once

#include <filesystem>
#include <iosfwd>

#include "adaslstm/model.hpp"

namespace adaslstm {

/// Binary archive: the magic "ADASLSTM", a little-endian u64 header length, a
/// JSON header (config, vocab, labels, dtype, parameter names/shapes/flags),
/// then every parameter's raw values in header order. Loading restores the
/// exact bits.
template <typename T>
void save_checkpoint(const Model<T>& model, std::ostream& out);
template <typename T>
void save_checkpoint(const Model<T>& model, const std::filesystem::path& path);

/// Throws ParseError on a corrupt or mismatched archive.
template <typename T>
Model<T> load_checkpoint(std::istream& in);
template <typename T>
Model<T> load_checkpoint(const std::filesystem::path& path);

}  // namespace adaslstm
