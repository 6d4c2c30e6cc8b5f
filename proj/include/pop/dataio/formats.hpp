#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "pop/bodykit/body.hpp"
#include "pop/core/pointset.hpp"

namespace pop::io {

// ASCII PLY with float x y z nx ny nz per vertex. Values are written with 9
// significant digits, enough to round-trip 32-bit floats exactly.
std::string format_ply(const PointSet& ps);
PointSet parse_ply(const std::string& text);
void write_ply(const PointSet& ps, const std::filesystem::path& path);
PointSet read_ply(const std::filesystem::path& path);

// "PMAP\n", "H W 3 f32\n", H*W*3 little-endian floats, H*W mask bytes.
std::string format_pmap(const body::PositionalMap& map);
body::PositionalMap parse_pmap(const std::string& bytes);
void write_pmap(const body::PositionalMap& map, const std::filesystem::path& path);
body::PositionalMap read_pmap(const std::filesystem::path& path);

// One "name ax ay az" line per joint in skeleton order, then
// "translation tx ty tz".
std::string format_pose(const body::Pose& pose, const body::Skeleton& skeleton);
body::Pose parse_pose(const std::string& text, const body::Skeleton& skeleton);
void write_pose(const body::Pose& pose, const body::Skeleton& skeleton, const std::filesystem::path& path);
body::Pose read_pose(const std::filesystem::path& path, const body::Skeleton& skeleton);

// Line-based "key = value" text with '#' comments. Keys must be unique.
std::map<std::string, std::string> parse_key_values(const std::string& text);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace pop::io
