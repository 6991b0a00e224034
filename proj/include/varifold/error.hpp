#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace varifold {

enum class ErrorCode {
  EmptyInput,
  EmptySet,
  DegenerateCloud,
  DimensionMismatch,
  BallBelowResolution,
  TooFewPoints,
  MissingCurvature,
  IllConditioned,
  PointOutsideDomain,
  EmptyFineSet,
  UncoveredQuery,
  GraphTestFailure,
  NoValidPreimage,
  NonContraction,
  NotDiskTopology,
  NoBoundaryCycle,
  DisconnectedPatch,
  SolverSingular,
  FoldedTriangles,
  DegenerateTriangle,
  RankDeficient,
  NotJordan,
  InvalidSpec,
  ParseError,
  NonManifoldMesh,
  IoError,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace varifold
