#pragma once

#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "ctdl/fields.hpp"
#include "ctdl/phantoms.hpp"

namespace ctdl {

constexpr double kInfinitePhotons = std::numeric_limits<double>::infinity();

/// One training tuple: ground truth, clean and collapsed sinograms, masks,
/// and the draw parameters that produced them.
struct Sample {
    Image f;           // ground truth
    Sinogram y;        // noise-free line integrals
    Sinogram p;        // noisy, truncated measurement (zero outside the mask)
    ProjectionMask T;
    ImageMask I;
    double i0 = kInfinitePhotons;
    double ratio = 0.0;
};

struct DatasetConfig {
    ImageGrid grid;
    FanBeamGeometry geom;
    enum class PhantomKind { SheppLogan, RandomEllipses } kind = PhantomKind::RandomEllipses;
    int n_phantoms = 1;
    int n_ellipses = 8;
    bool enumerate_ratios = false; // 7 samples per phantom on the ratio schedule
    bool flip_augment = false;     // random vertical-axis flip before projection
    std::vector<double> i0_choices;    // empty: log-uniform draw
    std::vector<double> ratio_choices; // empty: schedule draw (or enumeration)
    std::uint64_t seed = 0;
    std::string split = "train";
};

struct Dataset {
    std::vector<Sample> samples;
    std::uint64_t seed = 0;
    std::string split;
};

/// Poisson count statistics: I ~ Poisson(i0 * exp(-y)) per bin, counts
/// clamped at >= 1 before the log, p = -ln(I/i0). i0 = inf returns y.
Sinogram simulate_low_dose(const Sinogram& y, double i0, std::mt19937_64& rng);

/// Incident photons 10^u with u ~ Uniform(5, 8).
double sample_i0(std::mt19937_64& rng);

/// Number of entries in the truncation ratio schedule.
constexpr int kRatioScheduleSize = 7;

/// Schedule entry: {0, U(0,.58), .58, U(.58,.74), .74, U(.74,.83), .83}.
double truncation_ratio_entry(int entry, std::mt19937_64& rng);

/// Uniformly picks one schedule entry, then samples it.
double sample_truncation_ratio(std::mt19937_64& rng);

/// Deterministic dataset generation; every sample uses an rng stream derived
/// from (seed, phantom index, ratio slot) so results are thread-count invariant.
Dataset build_dataset(const DatasetConfig& config);

/// Reads an image in the container format, validating dimensions/finiteness.
Image ingest_raw_image(const std::string& path, const ImageGrid& grid);

} // namespace ctdl
