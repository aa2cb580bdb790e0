#include "mddmd/ensemble.hpp"

#include <cmath>
#include <string>

#include "mddmd/error.hpp"
#include "mddmd/parallel.hpp"

namespace mddmd {

namespace {

struct SampleResult {
  bool ok = false;
  CVector expLambda;  // exp(dt lambda1)
  CMatrix v1;
};

void validate(const KernelDistribution& dist) {
  if (!(dist.sigma >= 0.0) || !std::isfinite(dist.sigma)) {
    throw Error(ErrorCode::InvalidArgument, "kernel distribution: sigma must be >= 0");
  }
  if (dist.dimension < 1) {
    throw Error(ErrorCode::InvalidArgument, "kernel distribution: dimension must be >= 1");
  }
}

}  // namespace

RVector sample_kernel(const KernelDistribution& dist, Index index) {
  validate(dist);
  RVector k0 = RVector::Zero(dist.dimension);
  if (dist.sigma == 0.0) return k0;
  auto rng = make_stream(dist.seed, StreamPurpose::KernelSamples,
                         static_cast<std::uint64_t>(index));
  std::normal_distribution<double> normal(0.0, dist.sigma);
  for (Index i = 0; i < dist.dimension; ++i) k0(i) = normal(rng);
  return k0;
}

std::vector<RVector> sample_kernels(const KernelDistribution& dist, Index count) {
  if (count < 1) {
    throw Error(ErrorCode::InvalidArgument, "sample_kernels: count must be >= 1");
  }
  std::vector<RVector> out;
  out.reserve(static_cast<std::size_t>(count));
  for (Index i = 0; i < count; ++i) out.push_back(sample_kernel(dist, i));
  return out;
}

MddmdModel fit_mddmd(const SnapshotPair& snap, const KernelDistribution& dist,
                     const MddmdOptions& options) {
  return fit_mddmd(fit_dmd(snap, options.rankTol), snap, dist, options);
}

MddmdModel fit_mddmd(const DmdModel& base, const SnapshotPair& snap,
                     const KernelDistribution& dist, const MddmdOptions& options) {
  validate(dist);
  if (options.ensembleSize < 1) {
    throw Error(ErrorCode::InvalidArgument, "fit_mddmd: ensemble size must be >= 1");
  }
  if (dist.dimension != snap.observables()) {
    throw Error(ErrorCode::ShapeError,
                "fit_mddmd: kernel dimension does not match the observables");
  }

  // Spectrum checks happen here, once; DegenerateSpectrum aborts the fit.
  const perturbation::CorrectionContext correction_ctx =
      perturbation::prepare_correction(base, snap, options.layout, options.rankTol);
  const perturbation::ModeContext mode_ctx = perturbation::prepare_modes(base);
  const double dt = snap.dt;

  const Index count = options.ensembleSize;
  std::vector<SampleResult> results(static_cast<std::size_t>(count));
  parallel_for(count, options.threads, [&](std::int64_t i) {
    SampleResult& slot = results[static_cast<std::size_t>(i)];
    try {
      const CVector k0 = sample_kernel(dist, i).cast<Complex>();
      const auto correction = perturbation::assemble_correction(correction_ctx, k0);
      const auto modes = perturbation::first_order_modes(mode_ctx, correction.matrix);
      slot.expLambda = linalg::exp_diagonal(modes.lambda1, dt);
      slot.v1 = modes.v1;
      slot.ok = linalg::all_finite(slot.expLambda) && linalg::all_finite(slot.v1);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::DegenerateSpectrum) throw;
      slot.ok = false;
    }
  });

  MddmdModel model;
  model.base = base;
  model.gramIllConditioned = correction_ctx.gramIllConditioned;
  if (model.gramIllConditioned) {
    model.warnings.push_back(
        "GramIllConditioned: G- G-^T is near-singular; pseudoinverse substituted");
  }

  const Index dim = base.observables();
  CVector sum_exp = CVector::Zero(dim);
  CMatrix sum_v1 = CMatrix::Zero(dim, dim);
  Index used = 0;
  for (const auto& r : results) {
    if (!r.ok) continue;
    sum_exp += r.expLambda;
    sum_v1 += r.v1;
    ++used;
  }
  model.skipped = count - used;
  const double skipped_fraction =
      static_cast<double>(model.skipped) / static_cast<double>(count);
  if (used == 0 || skipped_fraction > options.maxSkippedFraction) {
    throw Error(ErrorCode::EnsembleUnreliable,
                std::to_string(model.skipped) + " of " + std::to_string(count) +
                    " kernel samples failed");
  }
  if (model.skipped > 0) {
    model.warnings.push_back("skipped " + std::to_string(model.skipped) +
                             " kernel samples after numerical failures");
  }

  model.ensembleSize = used;
  const double inv = 1.0 / static_cast<double>(used);
  model.lambdaBar1 = sum_exp * inv;
  model.vBar1 = sum_v1 * inv;

  model.fluctuations.lambdaVariance = RVector::Zero(dim);
  model.fluctuations.v1Variance = RVector::Zero(dim);
  for (const auto& r : results) {
    if (!r.ok) continue;
    for (Index l = 0; l < dim; ++l) {
      model.fluctuations.lambdaVariance(l) +=
          std::norm(r.expLambda(l) - model.lambdaBar1(l));
      model.fluctuations.v1Variance(l) +=
          (r.v1.col(l) - model.vBar1.col(l)).squaredNorm();
    }
  }
  model.fluctuations.lambdaVariance *= inv;
  model.fluctuations.v1Variance *= inv;
  return model;
}

CVector mddmd_reconstruct(const MddmdModel& model, double t, ExponentMap map) {
  if (!(t >= 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "mddmd_reconstruct: t must be >= 0");
  }
  const DmdModel& base = model.base;
  const double dt = base.dt;
  const double steps = t / dt;
  CVector out = CVector::Zero(base.observables());
  for (Index l = 0; l < base.modeCount(); ++l) {
    const Complex bar = model.lambdaBar1(l);
    if (std::abs(bar) < kBranchTol ||
        (bar.real() < 0.0 && std::abs(bar.imag()) <= kBranchTol * std::abs(bar))) {
      throw Error(ErrorCode::BranchAmbiguity,
                  "mddmd_reconstruct: averaged factor for mode " +
                      std::to_string(l) + " lies on the log branch cut");
    }
    const Complex lambda = base.discreteEigenvalues(l);
    const Complex base_rate = map == ExponentMap::FiniteDifference
                                  ? lambda - 1.0
                                  : continuous_exponent(lambda, 1.0, map);
    const Complex rate = base_rate + std::log(bar);
    const CVector mode = base.modes.col(l) + dt * model.vBar1.col(l);
    out += mode * (std::exp(steps * rate) * base.amplitudes(l));
  }
  return out;
}

}  // namespace mddmd
