#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "recomb/neural.hpp"

namespace recomb {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Binary checkpoint layout (all integers little-endian uint32, all values
/// little-endian IEEE-754 binary64):
///
///   magic "RCMBCKPT" (8 bytes), version
///   meta count, then per entry: key string, value string
///   vocab count (2), then per vocab: name string, token count, token strings
///   tensor count, then per tensor: name string, rows, cols, rows*cols values
///   in row-major order
///
/// Strings are a uint32 byte length followed by the bytes.
std::string serialize_checkpoint(const Seq2SeqModel& model, const std::map<std::string, std::string>& meta = {});
Seq2SeqModel parse_checkpoint(std::string_view bytes, std::map<std::string, std::string>* meta = nullptr);

void save_checkpoint(const std::filesystem::path& path, const Seq2SeqModel& model,
                     const std::map<std::string, std::string>& meta = {});
Seq2SeqModel load_checkpoint(const std::filesystem::path& path, std::map<std::string, std::string>* meta = nullptr);

}  // namespace recomb
