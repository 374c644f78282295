#include "maxent/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace maxent {

namespace {

constexpr int kBlockSize = 512;      // windows per reduction block
constexpr double kVarianceFloor = 1e-8;

struct Scratch {
  NeighborhoodValues nb;
  std::vector<double> energies;
};

/* Negative log conditional of every voice at one window center; when grad
 * is non-null the raw (un-normalized by M) moment-matching statistics are
 * accumulated into it. */
void window_contribution(const ModelParams& params, const Sequence& seq,
                         int center, double* loss_v, double* grad,
                         Scratch& scratch) {
  const Topology& topo = params.topology();
  const ParamLayout& layout = params.layout();
  const int nv = topo.n_voices();

  for (int v = 0; v < nv; ++v) {
    gather_neighborhood(seq, topo, v, center, scratch.nb);
    const NeighborhoodValues& nb = scratch.nb;

    if (topo.voices[static_cast<size_t>(v)].discrete()) {
      const int q = topo.voices[static_cast<size_t>(v)].q;
      const int x = seq.disc_at(v, center);
      auto& e = scratch.energies;
      if (static_cast<int>(e.size()) < q) e.resize(static_cast<size_t>(q));
      category_energies(nb, params, {e.data(), static_cast<size_t>(q)});

      double emin = e[0];
      for (int c = 1; c < q; ++c) emin = std::min(emin, e[static_cast<size_t>(c)]);
      double z = 0.0;
      for (int c = 0; c < q; ++c) {
        e[static_cast<size_t>(c)] = std::exp(-(e[static_cast<size_t>(c)] - emin));
        z += e[static_cast<size_t>(c)];
      }
      loss_v[v] += -std::log(e[static_cast<size_t>(x)] / z);
      if (!grad) continue;

      // r_c = observed indicator minus conditional probability
      for (int c = 0; c < q; ++c) e[static_cast<size_t>(c)] = -(e[static_cast<size_t>(c)] / z);
      e[static_cast<size_t>(x)] += 1.0;

      {
        double* g = grad + layout.field_offset(v);
        for (int c = 0; c < q; ++c) g[c] += e[static_cast<size_t>(c)];
      }
      for (int k = 1; k <= topo.k_hor; ++k) {
        const auto& left = nb.hor_left[static_cast<size_t>(k - 1)];
        const auto& right = nb.hor_right[static_cast<size_t>(k - 1)];
        double* g = grad + layout.hor_offset(v, k);
        if (right.present)
          for (int c = 0; c < q; ++c) g[c * q + right.x] += e[static_cast<size_t>(c)];
        if (left.present)
          for (int c = 0; c < q; ++c) g[left.x * q + c] += e[static_cast<size_t>(c)];
      }
      for (int u = 0; u < nv; ++u) {
        const auto& slot = nb.vert[static_cast<size_t>(u)];
        if (!slot.present) continue;
        const bool ud = topo.voices[static_cast<size_t>(u)].discrete();
        if (v < u) {
          double* g = grad + layout.vert_offset(v, u);
          if (ud) {
            const int qu = topo.voices[static_cast<size_t>(u)].q;
            for (int c = 0; c < q; ++c) g[c * qu + slot.x] += e[static_cast<size_t>(c)];
          } else {
            for (int c = 0; c < q; ++c) g[c] += e[static_cast<size_t>(c)] * slot.y;
          }
        } else {
          double* g = grad + layout.vert_offset(u, v);
          if (ud) {
            for (int c = 0; c < q; ++c) g[slot.x * q + c] += e[static_cast<size_t>(c)];
          } else {
            for (int c = 0; c < q; ++c) g[c] += e[static_cast<size_t>(c)] * slot.y;
          }
        }
      }
      for (int u = 0; u < nv; ++u) {
        if (u == v) continue;
        const bool ud = topo.voices[static_cast<size_t>(u)].discrete();
        const int qu = topo.voices[static_cast<size_t>(u)].q;
        for (int k = 1; k <= topo.k_diag; ++k) {
          const auto& fwd = nb.diag_fwd[static_cast<size_t>(u * topo.k_diag + (k - 1))];
          if (fwd.present) {
            double* g = grad + layout.diag_offset(v, u, k);
            if (ud)
              for (int c = 0; c < q; ++c) g[c * qu + fwd.x] += e[static_cast<size_t>(c)];
            else
              for (int c = 0; c < q; ++c) g[c] += e[static_cast<size_t>(c)] * fwd.y;
          }
          const auto& back = nb.diag_back[static_cast<size_t>(u * topo.k_diag + (k - 1))];
          if (back.present) {
            double* g = grad + layout.diag_offset(u, v, k);
            if (ud)
              for (int c = 0; c < q; ++c) g[back.x * q + c] += e[static_cast<size_t>(c)];
            else
              for (int c = 0; c < q; ++c) g[c] += e[static_cast<size_t>(c)] * back.y;
          }
        }
      }
    } else {
      const double y = seq.cont_at(v, center);
      const GaussianConditional cond = conditional_continuous(nb, params);
      const double a = params.quad_coeff(v);
      const double r = y - cond.mean;
      loss_v[v] += 0.5 * std::log(M_PI / a) + a * r * r;
      if (!grad) continue;

      grad[layout.field_offset(v)] += r;
      grad[layout.field_offset(v) + 1] +=
          y * y - (cond.mean * cond.mean + cond.variance);
      for (int k = 1; k <= topo.k_hor; ++k) {
        const auto& left = nb.hor_left[static_cast<size_t>(k - 1)];
        const auto& right = nb.hor_right[static_cast<size_t>(k - 1)];
        double* g = grad + layout.hor_offset(v, k);
        if (left.present) *g += r * left.y;
        if (right.present) *g += r * right.y;
      }
      for (int u = 0; u < nv; ++u) {
        const auto& slot = nb.vert[static_cast<size_t>(u)];
        if (!slot.present) continue;
        double* g = grad + (v < u ? layout.vert_offset(v, u) : layout.vert_offset(u, v));
        if (topo.voices[static_cast<size_t>(u)].discrete())
          g[slot.x] += r;
        else
          *g += r * slot.y;
      }
      for (int u = 0; u < nv; ++u) {
        if (u == v) continue;
        const bool ud = topo.voices[static_cast<size_t>(u)].discrete();
        for (int k = 1; k <= topo.k_diag; ++k) {
          const auto& fwd = nb.diag_fwd[static_cast<size_t>(u * topo.k_diag + (k - 1))];
          if (fwd.present) {
            double* g = grad + layout.diag_offset(v, u, k);
            if (ud)
              g[fwd.x] += r;
            else
              *g += r * fwd.y;
          }
          const auto& back = nb.diag_back[static_cast<size_t>(u * topo.k_diag + (k - 1))];
          if (back.present) {
            double* g = grad + layout.diag_offset(u, v, k);
            if (ud)
              g[back.x] += r;
            else
              *g += r * back.y;
          }
        }
      }
    }
  }
}

void check_batch(const ModelParams& params, const WindowBatch& batch) {
  if (batch.empty())
    throw ValidationError("pseudo-log-likelihood: empty window batch");
  (void)params;
}

double l2_penalty(const ModelParams& params, double l2) {
  if (l2 == 0.0) return 0.0;
  const auto theta = params.theta();
  const ParamLayout& layout = params.layout();
  double sum = 0.0;
  for (int i = 0; i < layout.size(); ++i)
    if (!layout.is_variance_coeff(i)) sum += theta[static_cast<size_t>(i)] * theta[static_cast<size_t>(i)];
  return l2 * sum;
}

LossBreakdown assemble_loss(const ModelParams& params, std::vector<double> loss_v,
                            double m, double l2) {
  LossBreakdown out;
  out.per_voice = std::move(loss_v);
  for (double& lv : out.per_voice) lv /= m;
  out.total = l2_penalty(params, l2);
  for (double lv : out.per_voice) out.total += lv;
  return out;
}

}  // namespace

LossBreakdown negative_pseudo_loglik_serial(const ModelParams& params,
                                            const WindowBatch& batch, double l2) {
  check_batch(params, batch);
  const int nv = params.topology().n_voices();
  std::vector<double> loss_v(static_cast<size_t>(nv), 0.0);
  Scratch scratch;
  for (const WindowRef& w : batch.windows())
    window_contribution(params, batch.seq_of(w), w.center, loss_v.data(), nullptr,
                        scratch);
  return assemble_loss(params, std::move(loss_v),
                       static_cast<double>(batch.size()), l2);
}

LossGradient loss_and_gradient_serial(const ModelParams& params,
                                      const WindowBatch& batch, double l2) {
  check_batch(params, batch);
  const int nv = params.topology().n_voices();
  const int np = params.layout().size();
  std::vector<double> loss_v(static_cast<size_t>(nv), 0.0);
  std::vector<double> grad(static_cast<size_t>(np), 0.0);
  Scratch scratch;
  for (const WindowRef& w : batch.windows())
    window_contribution(params, batch.seq_of(w), w.center, loss_v.data(),
                        grad.data(), scratch);

  const double m = static_cast<double>(batch.size());
  LossGradient out;
  out.loss = assemble_loss(params, std::move(loss_v), m, l2);
  out.grad = std::move(grad);
  const auto theta = params.theta();
  for (int i = 0; i < np; ++i) {
    out.grad[static_cast<size_t>(i)] /= m;
    if (l2 != 0.0 && !params.layout().is_variance_coeff(i))
      out.grad[static_cast<size_t>(i)] += 2.0 * l2 * theta[static_cast<size_t>(i)];
  }
  return out;
}

namespace {

/* Shared blocked driver: per-block partial sums computed in parallel, then
 * merged in block order. Identical results for any thread count. */
template <bool WithGrad>
void blocked_pass(const ModelParams& params, const WindowBatch& batch,
                  std::vector<double>& loss_v, std::vector<double>* grad) {
  const int nv = params.topology().n_voices();
  const int np = params.layout().size();
  const int n_windows = static_cast<int>(batch.size());
  const int n_blocks = (n_windows + kBlockSize - 1) / kBlockSize;

  std::vector<std::vector<double>> block_loss(
      static_cast<size_t>(n_blocks), std::vector<double>(static_cast<size_t>(nv), 0.0));
  std::vector<std::vector<double>> block_grad;
  if constexpr (WithGrad)
    block_grad.assign(static_cast<size_t>(n_blocks),
                      std::vector<double>(static_cast<size_t>(np), 0.0));

#pragma omp parallel
  {
    Scratch scratch;
#pragma omp for schedule(dynamic)
    for (int blk = 0; blk < n_blocks; ++blk) {
      const int begin = blk * kBlockSize;
      const int end = std::min(begin + kBlockSize, n_windows);
      double* g = nullptr;
      if constexpr (WithGrad) g = block_grad[static_cast<size_t>(blk)].data();
      for (int i = begin; i < end; ++i) {
        const WindowRef& w = batch.windows()[static_cast<size_t>(i)];
        window_contribution(params, batch.seq_of(w), w.center,
                            block_loss[static_cast<size_t>(blk)].data(), g, scratch);
      }
    }
  }

  for (int blk = 0; blk < n_blocks; ++blk) {
    for (int v = 0; v < nv; ++v)
      loss_v[static_cast<size_t>(v)] += block_loss[static_cast<size_t>(blk)][static_cast<size_t>(v)];
    if constexpr (WithGrad)
      for (int i = 0; i < np; ++i)
        (*grad)[static_cast<size_t>(i)] += block_grad[static_cast<size_t>(blk)][static_cast<size_t>(i)];
  }
}

}  // namespace

LossBreakdown negative_pseudo_loglik(const ModelParams& params,
                                     const WindowBatch& batch, double l2) {
  check_batch(params, batch);
  std::vector<double> loss_v(static_cast<size_t>(params.topology().n_voices()), 0.0);
  blocked_pass<false>(params, batch, loss_v, nullptr);
  return assemble_loss(params, std::move(loss_v),
                       static_cast<double>(batch.size()), l2);
}

LossGradient loss_and_gradient(const ModelParams& params, const WindowBatch& batch,
                               double l2) {
  check_batch(params, batch);
  const int np = params.layout().size();
  std::vector<double> loss_v(static_cast<size_t>(params.topology().n_voices()), 0.0);
  std::vector<double> grad(static_cast<size_t>(np), 0.0);
  blocked_pass<true>(params, batch, loss_v, &grad);

  const double m = static_cast<double>(batch.size());
  LossGradient out;
  out.loss = assemble_loss(params, std::move(loss_v), m, l2);
  out.grad = std::move(grad);
  const auto theta = params.theta();
  for (int i = 0; i < np; ++i) {
    out.grad[static_cast<size_t>(i)] /= m;
    if (l2 != 0.0 && !params.layout().is_variance_coeff(i))
      out.grad[static_cast<size_t>(i)] += 2.0 * l2 * theta[static_cast<size_t>(i)];
  }
  return out;
}

std::vector<double> gradient(const ModelParams& params, const WindowBatch& batch,
                             double l2) {
  return loss_and_gradient(params, batch, l2).grad;
}

void TrainConfig::validate() const {
  if (l2_strength < 0) throw ValidationError("train config: l2_strength < 0");
  if (!(step_size > 0)) throw ValidationError("train config: step_size <= 0");
  if (max_iterations < 1) throw ValidationError("train config: max_iterations < 1");
  if (!(grad_tolerance > 0)) throw ValidationError("train config: grad_tolerance <= 0");
  if (!(loss_rel_tolerance > 0))
    throw ValidationError("train config: loss_rel_tolerance <= 0");
}

namespace {

double max_norm(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::fabs(x));
  return m;
}

int sign_of(double x) { return x > 0 ? 1 : (x < 0 ? -1 : 0); }

}  // namespace

std::pair<ModelParams, TrainReport> fit_windows(const WindowBatch& batch,
                                                const Topology& topo,
                                                const TrainConfig& config) {
  config.validate();
  if (batch.empty()) throw ValidationError("fit: corpus yields no windows");

  ModelParams params{topo};
  TrainReport report;

  // start at the marginal: zero couplings, conditional variance = data variance
  for (int v = 0; v < topo.n_voices(); ++v) {
    if (topo.voices[static_cast<size_t>(v)].discrete()) continue;
    double sum = 0.0, sum_sq = 0.0;
    long count = 0;
    for (const Sequence* seq : batch.sequences()) {
      for (double y : seq->cont(v)) {
        sum += y;
        sum_sq += y * y;
      }
      count += seq->length();
    }
    const double mean = sum / static_cast<double>(count);
    double var = sum_sq / static_cast<double>(count) - mean * mean;
    if (var < kVarianceFloor) {
      report.warnings.push_back("voice " + std::to_string(v) +
                                " has near-zero variance; floored at 1e-8");
      var = kVarianceFloor;
    }
    params.quad_coeff(v) = 1.0 / (2.0 * var);
  }

  const int np = params.layout().size();
  LossGradient cur = loss_and_gradient(params, batch, config.l2_strength);
  if (!std::isfinite(cur.loss.total))
    throw NumericalError("fit: initial loss is not finite");

  std::vector<double> step(static_cast<size_t>(np), config.step_size);
  report.trace.push_back({0, cur.loss.total, max_norm(cur.grad)});

  constexpr double kStepGrow = 1.2;
  constexpr double kStepShrink = 0.5;
  constexpr double kStepMax = 50.0;
  constexpr double kStepMin = 1e-18;

  int small_drop_streak = 0;
  int iter = 0;
  for (iter = 1; iter <= config.max_iterations; ++iter) {
    if (max_norm(cur.grad) < config.grad_tolerance) {
      report.converged = true;
      report.stop_reason = "gradient tolerance";
      break;
    }

    ModelParams proposal = params;
    auto theta = proposal.theta();
    for (int i = 0; i < np; ++i) {
      const int s = sign_of(cur.grad[static_cast<size_t>(i)]);
      if (s == 0) continue;
      theta[static_cast<size_t>(i)] -= s * step[static_cast<size_t>(i)];
      if (proposal.layout().is_variance_coeff(i) && theta[static_cast<size_t>(i)] < kAMin) {
        theta[static_cast<size_t>(i)] = kAMin;  // projected update
        report.quad_floor_clips += 1;
      }
    }

    LossGradient next = loss_and_gradient(proposal, batch, config.l2_strength);
    if (std::isnan(next.loss.total))
      throw NumericalError("fit: loss diverged (NaN) at iteration " +
                           std::to_string(iter));

    if (next.loss.total <= cur.loss.total + 1e-12) {
      const double drop = cur.loss.total - next.loss.total;
      for (int i = 0; i < np; ++i) {
        const int agree = sign_of(cur.grad[static_cast<size_t>(i)]) *
                          sign_of(next.grad[static_cast<size_t>(i)]);
        if (agree > 0)
          step[static_cast<size_t>(i)] = std::min(step[static_cast<size_t>(i)] * kStepGrow, kStepMax);
        else if (agree < 0)
          step[static_cast<size_t>(i)] = std::max(step[static_cast<size_t>(i)] * kStepShrink, kStepMin);
      }
      params = std::move(proposal);
      cur = std::move(next);
      report.trace.push_back({iter, cur.loss.total, max_norm(cur.grad)});
      if (drop <= config.loss_rel_tolerance * std::max(1.0, std::fabs(cur.loss.total))) {
        if (++small_drop_streak >= 3) {
          report.converged = true;
          report.stop_reason = "loss tolerance";
          break;
        }
      } else {
        small_drop_streak = 0;
      }
    } else {
      report.rejected_steps += 1;
      double max_step = 0.0;
      for (int i = 0; i < np; ++i) {
        step[static_cast<size_t>(i)] = std::max(step[static_cast<size_t>(i)] * kStepShrink, kStepMin);
        max_step = std::max(max_step, step[static_cast<size_t>(i)]);
      }
      if (max_step <= 1e-16) {
        report.stop_reason = "step size collapse";
        break;
      }
    }
  }
  if (report.stop_reason.empty()) {
    report.stop_reason = "max iterations";
    iter = config.max_iterations;
  }

  report.iterations = std::min(iter, config.max_iterations);
  report.final_loss = cur.loss.total;
  report.per_voice_loss = cur.loss.per_voice;
  return {std::move(params), std::move(report)};
}

std::pair<ModelParams, TrainReport> fit(const Corpus& corpus, const Topology& topo,
                                        const TrainConfig& config) {
  topo.validate();
  if (corpus.topology.n_voices() != topo.n_voices())
    throw ValidationError("fit: corpus and training topology voice counts differ");
  for (int v = 0; v < topo.n_voices(); ++v) {
    const auto& a = corpus.topology.voices[static_cast<size_t>(v)];
    const auto& b = topo.voices[static_cast<size_t>(v)];
    if (a.kind != b.kind || a.q != b.q)
      throw ValidationError("fit: corpus and training topology disagree on voice " +
                            std::to_string(v));
  }

  return fit_windows(WindowBatch::from_corpus(corpus, topo), topo, config);
}

std::string TrainReport::to_json() const {
  nlohmann::json j;
  j["final_loss"] = final_loss;
  j["per_voice_loss"] = per_voice_loss;
  j["iterations"] = iterations;
  j["converged"] = converged;
  j["stop_reason"] = stop_reason;
  j["rejected_steps"] = rejected_steps;
  j["quad_floor_clips"] = quad_floor_clips;
  j["warnings"] = warnings;
  j["final_grad_max_norm"] = trace.empty() ? 0.0 : trace.back().grad_max_norm;
  return j.dump(2) + "\n";
}

void TrainReport::save_trace_csv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << "iteration,loss,grad_max_norm\n";
  char buf[64];
  for (const auto& p : trace) {
    out << p.iteration << ',';
    std::snprintf(buf, sizeof(buf), "%.17g", p.loss);
    out << buf << ',';
    std::snprintf(buf, sizeof(buf), "%.17g", p.grad_max_norm);
    out << buf << '\n';
  }
}

}  // namespace maxent
