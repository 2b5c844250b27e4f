#pragma once

#include <stdexcept>
#include <string>

namespace hteguard {

// Root of all library errors; message is always actionable on its own.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// numerics
struct NotSymmetric : Error { using Error::Error; };
struct NotPositiveSemiDefinite : Error { using Error::Error; };
struct RankDeficient : Error { using Error::Error; };
struct DimensionError : Error { using Error::Error; };
struct InvalidDf : Error { using Error::Error; };
struct ConvergenceFailure : Error { using Error::Error; };

// data
struct ParseError : Error { using Error::Error; };
struct MissingColumn : Error { using Error::Error; };
struct InvalidTreatmentValue : Error { using Error::Error; };
struct InvalidDataset : Error { using Error::Error; };
struct UnknownColumn : Error { using Error::Error; };
struct DegenerateLevel : Error { using Error::Error; };
struct MultipleCategoricals : Error { using Error::Error; };
struct UnsupportedProbability : Error { using Error::Error; };

// knockoff
struct ZeroColumn : Error { using Error::Error; };
struct NotUnitDiagonal : Error { using Error::Error; };

// sim / config
struct ConfigError : Error { using Error::Error; };

} // namespace hteguard
