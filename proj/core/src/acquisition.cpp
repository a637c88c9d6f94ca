#include "ctdl/acquisition.hpp"

#include <cmath>
#include <stdexcept>

#include "ctdl/io.hpp"
#include "ctdl/projector.hpp"

namespace ctdl {

Sinogram simulate_low_dose(const Sinogram& y, double i0, std::mt19937_64& rng) {
    if (!(i0 > 0.0))
        throw std::invalid_argument("simulate_low_dose: i0 must be positive or infinite");
    for (double v : y.values)
        if (v < 0.0) throw std::invalid_argument("simulate_low_dose: negative line integral");
    if (std::isinf(i0)) return y;

    Sinogram p(y.geom);
    for (std::size_t i = 0; i < y.values.size(); ++i) {
        const double lambda = i0 * std::exp(-y.values[i]);
        std::poisson_distribution<long long> poisson(lambda);
        const long long counts = std::max<long long>(1, poisson(rng));
        p.values[i] = -std::log(double(counts) / i0);
    }
    return p;
}

double sample_i0(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(5.0, 8.0);
    return std::pow(10.0, u(rng));
}

double truncation_ratio_entry(int entry, std::mt19937_64& rng) {
    switch (entry) {
        case 0: return 0.0;
        case 1: return std::uniform_real_distribution<double>(0.0, 0.58)(rng);
        case 2: return 0.58;
        case 3: return std::uniform_real_distribution<double>(0.58, 0.74)(rng);
        case 4: return 0.74;
        case 5: return std::uniform_real_distribution<double>(0.74, 0.83)(rng);
        case 6: return 0.83;
        default: throw std::invalid_argument("truncation_ratio_entry: entry out of range");
    }
}

double sample_truncation_ratio(std::mt19937_64& rng) {
    std::uniform_int_distribution<int> pick(0, kRatioScheduleSize - 1);
    return truncation_ratio_entry(pick(rng), rng);
}

namespace {

std::mt19937_64 stream(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
    std::seed_seq seq{std::uint32_t(seed), std::uint32_t(seed >> 32), std::uint32_t(a),
                      std::uint32_t(b)};
    return std::mt19937_64(seq);
}

Sinogram apply_mask(const Sinogram& s, const ProjectionMask& mask) {
    Sinogram out(s.geom);
    for (std::size_t i = 0; i < s.values.size(); ++i)
        out.values[i] = mask.values[i] ? s.values[i] : 0.0;
    return out;
}

} // namespace

Dataset build_dataset(const DatasetConfig& config) {
    validate(config.grid);
    validate(config.geom);
    if (config.n_phantoms < 1)
        throw ConfigError("build_dataset: n_phantoms must be >= 1");
    if (config.kind == DatasetConfig::PhantomKind::RandomEllipses && config.n_ellipses < 1)
        throw ConfigError("build_dataset: n_ellipses must be >= 1");
    for (double i0 : config.i0_choices)
        if (!(i0 > 0.0)) throw ConfigError("build_dataset: i0 choices must be positive");
    for (double r : config.ratio_choices)
        if (!(r >= 0.0) || r >= 1.0) throw ConfigError("build_dataset: ratio choices out of range");
    if (config.enumerate_ratios && !config.ratio_choices.empty())
        throw ConfigError("build_dataset: enumerate_ratios excludes explicit ratio choices");

    const int per_phantom = config.enumerate_ratios ? kRatioScheduleSize : 1;
    Dataset ds;
    ds.seed = config.seed;
    ds.split = config.split;
    ds.samples.resize(std::size_t(config.n_phantoms) * per_phantom);

#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic, 1)
#endif
    for (int ph = 0; ph < config.n_phantoms; ++ph) {
        auto prng = stream(config.seed, std::uint64_t(ph), 0x70686e74ull);
        Image f = config.kind == DatasetConfig::PhantomKind::SheppLogan
                      ? shepp_logan(config.grid)
                      : random_ellipse_phantom(config.grid, prng, config.n_ellipses);
        if (config.flip_augment && std::bernoulli_distribution(0.5)(prng))
            f = flip_vertical_axis(f);
        const Sinogram y = forward_project(f, config.geom);

        for (int slot = 0; slot < per_phantom; ++slot) {
            auto srng = stream(config.seed, std::uint64_t(ph), std::uint64_t(slot) + 1);
            Sample s;
            s.f = f;
            s.y = y;
            if (config.enumerate_ratios) {
                s.ratio = truncation_ratio_entry(slot, srng);
            } else if (!config.ratio_choices.empty()) {
                std::uniform_int_distribution<std::size_t> pick(0, config.ratio_choices.size() - 1);
                s.ratio = config.ratio_choices[pick(srng)];
            } else {
                s.ratio = sample_truncation_ratio(srng);
            }
            if (!config.i0_choices.empty()) {
                std::uniform_int_distribution<std::size_t> pick(0, config.i0_choices.size() - 1);
                s.i0 = config.i0_choices[pick(srng)];
            } else {
                s.i0 = sample_i0(srng);
            }
            s.T = truncation_mask(config.geom, s.ratio);
            s.I = roi_mask(config.grid, config.geom, s.T);
            s.p = apply_mask(simulate_low_dose(y, s.i0, srng), s.T);
            ds.samples[std::size_t(ph) * per_phantom + slot] = std::move(s);
        }
    }
    return ds;
}

Image ingest_raw_image(const std::string& path, const ImageGrid& grid) {
    Image img = read_image(path, grid);
    img.role = ImageRole::Generic;
    return img;
}

} // namespace ctdl
