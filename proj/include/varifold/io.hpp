#pragma once

#include <filesystem>
#include <string>

#include "varifold/conformal.hpp"
#include "varifold/mesh.hpp"

namespace varifold {

/// Point cloud CSV. Header `x1,..,xn,weight` optionally followed by tangent
/// frames `t11,..,t1n,t21,..,t2n` (one row per point). Gzip input is detected
/// by its magic bytes. Missing frames are estimated by PCA at 3x mean spacing.
/// Throws ParseError (with the line number) or IoError.
WeightedSurfaceSample load_pointcloud(const std::filesystem::path& path);

/// Writes the CSV with frames; doubles are printed in shortest round-trip
/// form. gzip compresses through zlib (also implied by a ".gz" suffix).
void save_pointcloud(const WeightedSurfaceSample& sample, const std::filesystem::path& path, bool gzip = false);

/// Parses CSV text (already decompressed). `origin` names the source in errors.
WeightedSurfaceSample parse_pointcloud(const std::string& text, const std::string& origin = "csv");

/// Triangle meshes from OFF or OBJ (by extension). Faces must be triangles:
/// anything else is a ParseError naming the face index and line. Throws
/// NonManifoldMesh for edges shared by three or more faces.
TriangleMesh read_mesh(const std::filesystem::path& path);
TriangleMesh parse_off(const std::string& text);
TriangleMesh parse_obj(const std::string& text);

/// read_mesh followed by sample_from_mesh.
WeightedSurfaceSample load_mesh(const std::filesystem::path& path);

/// Mesh files by extension (.off, .obj), point clouds otherwise.
WeightedSurfaceSample load_any(const std::filesystem::path& path);

/// Whole file as bytes, inflating gzip when present. Throws IoError.
std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& data, bool gzip = false);

std::string mesh_to_obj(const TriangleMesh& mesh);
/// Image vertices with the disk positions as texture coordinates.
std::string parameterization_to_obj(const DiskParameterization& param);
/// Parameter-domain triangles filled by w (blue low, red high).
std::string parameterization_to_svg(const DiskParameterization& param, int size = 800);

}  // namespace varifold
