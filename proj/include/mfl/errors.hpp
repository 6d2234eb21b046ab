#pragma once

#include <stdexcept>
#include <string>

namespace mfl {

// Error categories used across the library. Tests match on the code, not the
// message text.
enum class Errc {
  EmptySupport,
  NegativeWeight,
  WeightSumOutOfRange,
  BadInitializerSpec,
  FileFormatError,
  NonFiniteDrift,
  NonFiniteState,
  MonitorFailure,
  EmptySample,
  TooManyParticles,
  DimensionMismatch,
  EnvironmentMismatch,
  DegenerateSample,
  ScoreEstimationFailure,
  EnergyUnavailable,
  KappaNotEventuallyNegative,
  QuadratureFailure,
  OdeBlowup,
  EmptySampleSet,
  NonFiniteLogDensity,
  ConfigParseError,
};

inline const char* errc_name(Errc c) {
  switch (c) {
    case Errc::EmptySupport: return "EmptySupport";
    case Errc::NegativeWeight: return "NegativeWeight";
    case Errc::WeightSumOutOfRange: return "WeightSumOutOfRange";
    case Errc::BadInitializerSpec: return "BadInitializerSpec";
    case Errc::FileFormatError: return "FileFormatError";
    case Errc::NonFiniteDrift: return "NonFiniteDrift";
    case Errc::NonFiniteState: return "NonFiniteState";
    case Errc::MonitorFailure: return "MonitorFailure";
    case Errc::EmptySample: return "EmptySample";
    case Errc::TooManyParticles: return "TooManyParticles";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::EnvironmentMismatch: return "EnvironmentMismatch";
    case Errc::DegenerateSample: return "DegenerateSample";
    case Errc::ScoreEstimationFailure: return "ScoreEstimationFailure";
    case Errc::EnergyUnavailable: return "EnergyUnavailable";
    case Errc::KappaNotEventuallyNegative: return "KappaNotEventuallyNegative";
    case Errc::QuadratureFailure: return "QuadratureFailure";
    case Errc::OdeBlowup: return "OdeBlowup";
    case Errc::EmptySampleSet: return "EmptySampleSet";
    case Errc::NonFiniteLogDensity: return "NonFiniteLogDensity";
    case Errc::ConfigParseError: return "ConfigParseError";
  }
  return "UnknownError";
}

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace mfl
