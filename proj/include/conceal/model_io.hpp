#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>

#include "conceal/attacks.hpp"
#include "conceal/detector.hpp"

namespace conceal::io {

inline constexpr std::uint32_t kFormatVersion = 1;

/// Little-endian binary artifacts; layout in docs/model_format.md.
void write_detector(std::ostream& out, const detector::DetectorModel& model);
detector::DetectorModel read_detector(std::istream& in);
void save_detector(const detector::DetectorModel& model, const std::filesystem::path& path);
detector::DetectorModel load_detector(const std::filesystem::path& path);

void write_generator(std::ostream& out, const attacks::GeneratorModel& model);
attacks::GeneratorModel read_generator(std::istream& in);
void save_generator(const attacks::GeneratorModel& model, const std::filesystem::path& path);
attacks::GeneratorModel load_generator(const std::filesystem::path& path);

/// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);

}  // namespace conceal::io
