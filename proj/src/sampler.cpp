#include "maxent/sampler.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "maxent/training.hpp"

namespace maxent {

void GenerationConfig::validate(const Topology& topo) const {
  if (length < 1) throw ValidationError("generation: length must be >= 1");
  if (!(sweeps_factor > 0))
    throw ValidationError("generation: sweeps_factor must be > 0");
  if (monitor_stride < 0)
    throw ValidationError("generation: monitor_stride must be >= 0");

  const int nv = topo.n_voices();
  auto check_size = [&](std::size_t have, int v) {
    if (static_cast<int>(have) != length)
      throw ValidationError("generation: clamp for voice " + std::to_string(v) +
                            " has length " + std::to_string(have) +
                            ", expected " + std::to_string(length));
  };
  if (!clamp_disc.empty() && static_cast<int>(clamp_disc.size()) != nv)
    throw ValidationError("generation: clamp_disc must have one slot per voice");
  if (!clamp_cont.empty() && static_cast<int>(clamp_cont.size()) != nv)
    throw ValidationError("generation: clamp_cont must have one slot per voice");
  for (int v = 0; v < nv; ++v) {
    const bool disc = topo.voices[static_cast<size_t>(v)].discrete();
    if (v < static_cast<int>(clamp_disc.size()) && clamp_disc[static_cast<size_t>(v)]) {
      if (!disc)
        throw ValidationError("generation: discrete clamp on continuous voice " +
                              std::to_string(v));
      check_size(clamp_disc[static_cast<size_t>(v)]->size(), v);
      const int q = topo.voices[static_cast<size_t>(v)].q;
      for (int x : *clamp_disc[static_cast<size_t>(v)])
        if (x < 0 || x >= q)
          throw ValidationError("generation: clamp category " + std::to_string(x) +
                                " outside [0, " + std::to_string(q) + ") for voice " +
                                std::to_string(v));
    }
    if (v < static_cast<int>(clamp_cont.size()) && clamp_cont[static_cast<size_t>(v)]) {
      if (disc)
        throw ValidationError("generation: continuous clamp on discrete voice " +
                              std::to_string(v));
      check_size(clamp_cont[static_cast<size_t>(v)]->size(), v);
    }
  }
}

int resample_site_discrete(const Sequence& state, const Topology& topo, int v,
                           int n, const ModelParams& params, Rng& rng) {
  thread_local NeighborhoodValues nb;
  gather_neighborhood(state, topo, v, n, nb);
  const int q = topo.voices[static_cast<size_t>(v)].q;
  std::vector<double> probs(static_cast<size_t>(q));
  conditional_discrete(nb, params, probs);
  const double u = rng.uniform();
  double acc = 0.0;
  for (int c = 0; c < q; ++c) {
    acc += probs[static_cast<size_t>(c)];
    if (u < acc) return c;
  }
  return q - 1;
}

double resample_site_continuous(const Sequence& state, const Topology& topo,
                                int v, int n, const ModelParams& params, Rng& rng) {
  thread_local NeighborhoodValues nb;
  gather_neighborhood(state, topo, v, n, nb);
  const GaussianConditional cond = conditional_continuous(nb, params);
  return cond.mean + std::sqrt(cond.variance) * rng.normal();
}

namespace {

bool is_clamped(const GenerationConfig& config, int v) {
  if (v < static_cast<int>(config.clamp_disc.size()) &&
      config.clamp_disc[static_cast<size_t>(v)])
    return true;
  if (v < static_cast<int>(config.clamp_cont.size()) &&
      config.clamp_cont[static_cast<size_t>(v)])
    return true;
  return false;
}

}  // namespace

std::pair<double, double> monitor_state(const Sequence& state,
                                        const ModelParams& params,
                                        const ObservableVector& reference) {
  const Topology& topo = params.topology();
  const WindowBatch batch = WindowBatch::from_sequence(state, topo);
  if (batch.empty())
    throw ValidationError("monitor_state: sequence too short for any window");
  const double nll = negative_pseudo_loglik(params, batch, 0.0).total;
  const double dist =
      observable_distance(observable_vector(state, topo), reference);
  return {nll, dist};
}

GenerationResult generate(const ModelParams& params, const GenerationConfig& config,
                          const ObservableVector* reference) {
  const Topology& topo = params.topology();
  config.validate(topo);
  Rng rng(config.seed);

  const int nv = topo.n_voices();
  const int len = config.length;
  Sequence state(topo, len);

  // clamped values verbatim; everything else initialized at the field-implied marginal
  std::vector<std::pair<int, int>> free_sites;
  free_sites.reserve(static_cast<size_t>(nv) * static_cast<size_t>(len));
  for (int v = 0; v < nv; ++v) {
    const bool disc = topo.voices[static_cast<size_t>(v)].discrete();
    if (is_clamped(config, v)) {
      if (disc) {
        const auto& values = *config.clamp_disc[static_cast<size_t>(v)];
        std::copy(values.begin(), values.end(), state.disc(v).begin());
      } else {
        const auto& values = *config.clamp_cont[static_cast<size_t>(v)];
        std::copy(values.begin(), values.end(), state.cont(v).begin());
      }
      continue;
    }
    if (disc) {
      const int q = topo.voices[static_cast<size_t>(v)].q;
      for (int n = 0; n < len; ++n)
        state.disc(v)[static_cast<size_t>(n)] =
            static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(q)));
    } else {
      const double a = params.quad_coeff(v);
      if (!(a >= kAMin))
        throw ValidationError("generate: quadratic coefficient below floor for voice " +
                              std::to_string(v));
      const double mean = -params.cont_field(v) / (2.0 * a);
      const double sd = std::sqrt(1.0 / (2.0 * a));
      for (int n = 0; n < len; ++n)
        state.cont(v)[static_cast<size_t>(n)] = rng.normal(mean, sd);
    }
    for (int n = 0; n < len; ++n) free_sites.push_back({v, n});
  }
  if (free_sites.empty())
    throw ValidationError("generate: all voices are clamped, nothing to sample");

  const long n_var = static_cast<long>(nv) * len;
  const long total_updates = std::llround(config.sweeps_factor * static_cast<double>(n_var));
  const long stride = config.monitor_stride > 0 ? config.monitor_stride : n_var;

  GenerationResult result{std::move(state), {}};
  auto checkpoint = [&](long iteration) {
    if (!reference) return;
    const auto [nll, dist] = monitor_state(result.seq, params, *reference);
    result.trace.points.push_back({iteration, nll, dist});
  };
  checkpoint(0);

  for (long it = 1; it <= total_updates; ++it) {
    const auto [v, n] =
        free_sites[rng.uniform_int(static_cast<std::uint64_t>(free_sites.size()))];
    if (topo.voices[static_cast<size_t>(v)].discrete())
      result.seq.disc(v)[static_cast<size_t>(n)] =
          resample_site_discrete(result.seq, topo, v, n, params, rng);
    else
      result.seq.cont(v)[static_cast<size_t>(n)] =
          resample_site_continuous(result.seq, topo, v, n, params, rng);
    if (it % stride == 0 || it == total_updates) checkpoint(it);
  }
  return result;
}

Sequence random_baseline(const Topology& topo, const GenerationConfig& config,
                         const ObservableVector& reference) {
  config.validate(topo);
  Rng rng(config.seed);
  const int nv = topo.n_voices();
  Sequence state(topo, config.length);

  for (int v = 0; v < nv; ++v) {
    const bool disc = topo.voices[static_cast<size_t>(v)].discrete();
    if (is_clamped(config, v)) {
      if (disc) {
        const auto& values = *config.clamp_disc[static_cast<size_t>(v)];
        std::copy(values.begin(), values.end(), state.disc(v).begin());
      } else {
        const auto& values = *config.clamp_cont[static_cast<size_t>(v)];
        std::copy(values.begin(), values.end(), state.cont(v).begin());
      }
      continue;
    }
    if (disc) {
      const int q = topo.voices[static_cast<size_t>(v)].q;
      std::vector<double> freq(static_cast<size_t>(q));
      double norm = 0.0;
      for (int c = 0; c < q; ++c) {
        freq[static_cast<size_t>(c)] = reference.value_of(freq_label(v, c));
        norm += freq[static_cast<size_t>(c)];
      }
      if (!(norm > 0))
        throw ValidationError("random_baseline: frequencies for voice " +
                              std::to_string(v) + " sum to zero");
      for (int n = 0; n < config.length; ++n) {
        const double u = rng.uniform() * norm;
        double acc = 0.0;
        int pick = q - 1;
        for (int c = 0; c < q; ++c) {
          acc += freq[static_cast<size_t>(c)];
          if (u < acc) {
            pick = c;
            break;
          }
        }
        state.disc(v)[static_cast<size_t>(n)] = pick;
      }
    } else {
      const double mean = reference.value_of(mean_label(v));
      const double sd = reference.value_of(sd_label(v));
      for (int n = 0; n < config.length; ++n)
        state.cont(v)[static_cast<size_t>(n)] = rng.normal(mean, sd);
    }
  }
  return state;
}

void MonitorTrace::save_csv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << "iteration,nll,distance\n";
  char buf[64];
  for (const auto& p : points) {
    out << p.iteration << ',';
    std::snprintf(buf, sizeof(buf), "%.17g", p.nll);
    out << buf << ',';
    std::snprintf(buf, sizeof(buf), "%.17g", p.distance);
    out << buf << '\n';
  }
}

}  // namespace maxent
