#include "support/oracles.hpp"

#include <cmath>
#include <stdexcept>

#include "maxent/training.hpp"

namespace maxent::testing {

namespace {

bool disc(const Topology& topo, int v) {
  return topo.voices[static_cast<size_t>(v)].discrete();
}
int qof(const Topology& topo, int v) { return topo.voices[static_cast<size_t>(v)].q; }

// energy of the pair (z_a at na, z_b at nb) read from a stored block where
// voice a owns the rows / first role
double pair_energy(const Topology& topo, const Sequence& seq,
                   std::span<const double> block, int a, int b, int na, int nb) {
  const bool da = disc(topo, a), db = disc(topo, b);
  if (da && db)
    return block[static_cast<size_t>(seq.disc_at(a, na) * qof(topo, b) + seq.disc_at(b, nb))];
  if (da) return block[static_cast<size_t>(seq.disc_at(a, na))] * seq.cont_at(b, nb);
  if (db) return block[static_cast<size_t>(seq.disc_at(b, nb))] * seq.cont_at(a, na);
  return block[0] * seq.cont_at(a, na) * seq.cont_at(b, nb);
}

}  // namespace

double full_energy(const ModelParams& params, const Sequence& seq) {
  const Topology& topo = params.topology();
  const int nv = topo.n_voices();
  const int len = seq.length();
  double h = 0.0;

  for (int v = 0; v < nv; ++v) {
    if (disc(topo, v)) {
      const auto field = params.disc_field(v);
      for (int n = 0; n < len; ++n) h += field[static_cast<size_t>(seq.disc_at(v, n))];
    } else {
      const double a = params.quad_coeff(v);
      const double hv = params.cont_field(v);
      for (int n = 0; n < len; ++n) {
        const double y = seq.cont_at(v, n);
        h += a * y * y + hv * y;
      }
    }
  }
  for (int v = 0; v < nv; ++v)
    for (int k = 1; k <= topo.k_hor; ++k)
      for (int n = 0; n + k < len; ++n)
        h += pair_energy(topo, seq, params.hor(v, k), v, v, n, n + k);
  for (int a = 0; a < nv; ++a)
    for (int b = a + 1; b < nv; ++b)
      for (int n = 0; n < len; ++n)
        h += pair_energy(topo, seq, params.vert(a, b), a, b, n, n);
  for (int a = 0; a < nv; ++a)
    for (int b = 0; b < nv; ++b) {
      if (a == b) continue;
      for (int k = 1; k <= topo.k_diag; ++k)
        for (int n = 0; n + k < len; ++n)
          h += pair_energy(topo, seq, params.diag(a, b, k), a, b, n, n + k);
    }
  return h;
}

// ---- brute-force observables ----

namespace {

struct Acc {
  double sum = 0.0;
  double count = 0.0;
  void add(double s, double c) {
    sum += s;
    count += c;
  }
  ObservableEntry done(std::string label) const {
    if (count <= 0)
      return {std::move(label), std::numeric_limits<double>::quiet_NaN(), 0.0};
    return {std::move(label), sum / count, count};
  }
};

}  // namespace

ObservableVector brute_force_observables(std::span<const Sequence* const> seqs,
                                         const Topology& topo) {
  const int nv = topo.n_voices();
  std::vector<ObservableEntry> entries;

  // means
  for (int v = 0; v < nv; ++v) {
    if (disc(topo, v)) continue;
    Acc acc;
    for (const Sequence* s : seqs) {
      double sum = 0.0;
      for (int n = 0; n < s->length(); ++n) sum += s->cont_at(v, n);
      acc.add(sum, s->length());
    }
    entries.push_back(acc.done(mean_label(v)));
  }
  // standard deviations from pooled first and second moments
  for (int v = 0; v < nv; ++v) {
    if (disc(topo, v)) continue;
    Acc m1, m2;
    for (const Sequence* s : seqs) {
      double sum = 0.0, sum_sq = 0.0;
      for (int n = 0; n < s->length(); ++n) {
        sum += s->cont_at(v, n);
        sum_sq += s->cont_at(v, n) * s->cont_at(v, n);
      }
      m1.add(sum, s->length());
      m2.add(sum_sq, s->length());
    }
    const double mean = m1.sum / m1.count;
    entries.push_back({sd_label(v),
                       std::sqrt(std::max(0.0, m2.sum / m2.count - mean * mean)),
                       m2.count});
  }
  // category frequencies
  for (int v = 0; v < nv; ++v) {
    if (!disc(topo, v)) continue;
    for (int c = 0; c < qof(topo, v); ++c) {
      Acc acc;
      for (const Sequence* s : seqs) {
        double hits = 0.0;
        for (int n = 0; n < s->length(); ++n) hits += s->disc_at(v, n) == c;
        acc.add(hits, s->length());
      }
      entries.push_back(acc.done(freq_label(v, c)));
    }
  }
  // horizontal
  for (int v = 0; v < nv; ++v)
    for (int k = 1; k <= topo.k_hor; ++k) {
      if (disc(topo, v)) {
        const int q = qof(topo, v);
        for (int i = 0; i < q; ++i)
          for (int j = 0; j < q; ++j) {
            Acc acc;
            for (const Sequence* s : seqs) {
              if (s->length() <= k) continue;
              double hits = 0.0;
              for (int n = 0; n + k < s->length(); ++n)
                hits += s->disc_at(v, n) == i && s->disc_at(v, n + k) == j;
              acc.add(hits, s->length() - k);
            }
            entries.push_back(acc.done(hor_label(v, k, i, j)));
          }
      } else {
        Acc acc;
        for (const Sequence* s : seqs) {
          if (s->length() <= k) continue;
          double sum = 0.0;
          for (int n = 0; n + k < s->length(); ++n)
            sum += s->cont_at(v, n) * s->cont_at(v, n + k);
          acc.add(sum, s->length() - k);
        }
        entries.push_back(acc.done(hor_label(v, k)));
      }
    }
  // vertical
  for (int a = 0; a < nv; ++a)
    for (int b = a + 1; b < nv; ++b) {
      const bool da = disc(topo, a), db = disc(topo, b);
      if (da && db) {
        for (int i = 0; i < qof(topo, a); ++i)
          for (int j = 0; j < qof(topo, b); ++j) {
            Acc acc;
            for (const Sequence* s : seqs) {
              double hits = 0.0;
              for (int n = 0; n < s->length(); ++n)
                hits += s->disc_at(a, n) == i && s->disc_at(b, n) == j;
              acc.add(hits, s->length());
            }
            entries.push_back(acc.done(vert_label(a, b, i, j)));
          }
      } else if (da || db) {
        const int dv = da ? a : b;
        const int cv = da ? b : a;
        for (int c = 0; c < qof(topo, dv); ++c) {
          Acc acc;
          for (const Sequence* s : seqs) {
            double sum = 0.0;
            for (int n = 0; n < s->length(); ++n)
              if (s->disc_at(dv, n) == c) sum += s->cont_at(cv, n);
            acc.add(sum, s->length());
          }
          entries.push_back(acc.done(vert_label(a, b, c)));
        }
      } else {
        Acc acc;
        for (const Sequence* s : seqs) {
          double sum = 0.0;
          for (int n = 0; n < s->length(); ++n)
            sum += s->cont_at(a, n) * s->cont_at(b, n);
          acc.add(sum, s->length());
        }
        entries.push_back(acc.done(vert_label(a, b)));
      }
    }
  // diagonal
  for (int a = 0; a < nv; ++a)
    for (int b = 0; b < nv; ++b) {
      if (a == b) continue;
      for (int k = 1; k <= topo.k_diag; ++k) {
        const bool da = disc(topo, a), db = disc(topo, b);
        if (da && db) {
          for (int i = 0; i < qof(topo, a); ++i)
            for (int j = 0; j < qof(topo, b); ++j) {
              Acc acc;
              for (const Sequence* s : seqs) {
                if (s->length() <= k) continue;
                double hits = 0.0;
                for (int n = 0; n + k < s->length(); ++n)
                  hits += s->disc_at(a, n) == i && s->disc_at(b, n + k) == j;
                acc.add(hits, s->length() - k);
              }
              entries.push_back(acc.done(diag_label(a, b, k, i, j)));
            }
        } else if (da || db) {
          const int q = qof(topo, da ? a : b);
          for (int c = 0; c < q; ++c) {
            Acc acc;
            for (const Sequence* s : seqs) {
              if (s->length() <= k) continue;
              double sum = 0.0;
              for (int n = 0; n + k < s->length(); ++n) {
                if (da) {
                  if (s->disc_at(a, n) == c) sum += s->cont_at(b, n + k);
                } else {
                  if (s->disc_at(b, n + k) == c) sum += s->cont_at(a, n);
                }
              }
              acc.add(sum, s->length() - k);
            }
            entries.push_back(acc.done(diag_label(a, b, k, c)));
          }
        } else {
          Acc acc;
          for (const Sequence* s : seqs) {
            if (s->length() <= k) continue;
            double sum = 0.0;
            for (int n = 0; n + k < s->length(); ++n)
              sum += s->cont_at(a, n) * s->cont_at(b, n + k);
            acc.add(sum, s->length() - k);
          }
          entries.push_back(acc.done(diag_label(a, b, k)));
        }
      }
    }
  return ObservableVector(std::move(entries));
}

ObservableVector brute_force_observables(const Sequence& seq, const Topology& topo) {
  const Sequence* ptr = &seq;
  return brute_force_observables(std::span<const Sequence* const>(&ptr, 1), topo);
}

// ---- exhaustive enumeration ----

long state_count(const Topology& topo, int length) {
  long count = 1;
  for (int v = 0; v < topo.n_voices(); ++v) {
    if (!disc(topo, v)) throw std::invalid_argument("enumeration needs all-discrete voices");
    for (int n = 0; n < length; ++n) count *= qof(topo, v);
  }
  return count;
}

Sequence decode_state(const Topology& topo, int length, long index) {
  Sequence seq(topo, length);
  for (int v = 0; v < topo.n_voices(); ++v)
    for (int n = 0; n < length; ++n) {
      const int q = qof(topo, v);
      seq.disc(v)[static_cast<size_t>(n)] = static_cast<int>(index % q);
      index /= q;
    }
  return seq;
}

std::vector<double> enumerate_joint(const ModelParams& params, int length) {
  const Topology& topo = params.topology();
  const long count = state_count(topo, length);
  std::vector<double> energy(static_cast<size_t>(count));
  double emin = std::numeric_limits<double>::infinity();
  for (long s = 0; s < count; ++s) {
    energy[static_cast<size_t>(s)] = full_energy(params, decode_state(topo, length, s));
    emin = std::min(emin, energy[static_cast<size_t>(s)]);
  }
  double z = 0.0;
  for (long s = 0; s < count; ++s) {
    energy[static_cast<size_t>(s)] = std::exp(-(energy[static_cast<size_t>(s)] - emin));
    z += energy[static_cast<size_t>(s)];
  }
  for (long s = 0; s < count; ++s) energy[static_cast<size_t>(s)] /= z;
  return energy;
}

// ---- analytic Gaussian joint ----

std::vector<std::vector<double>> invert_matrix(std::vector<std::vector<double>> m) {
  const std::size_t n = m.size();
  std::vector<std::vector<double>> inv(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) inv[i][i] = 1.0;
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::fabs(m[r][col]) > std::fabs(m[pivot][col])) pivot = r;
    if (std::fabs(m[pivot][col]) < 1e-12)
      throw std::runtime_error("invert_matrix: singular matrix");
    std::swap(m[pivot], m[col]);
    std::swap(inv[pivot], inv[col]);
    const double d = m[col][col];
    for (std::size_t c = 0; c < n; ++c) {
      m[col][c] /= d;
      inv[col][c] /= d;
    }
    for (std::size_t r = 0; r < n; ++r) {
      if (r == col) continue;
      const double f = m[r][col];
      if (f == 0.0) continue;
      for (std::size_t c = 0; c < n; ++c) {
        m[r][c] -= f * m[col][c];
        inv[r][c] -= f * inv[col][c];
      }
    }
  }
  return inv;
}

GaussianJoint gaussian_joint(const ModelParams& params, int length) {
  const Topology& topo = params.topology();
  const int nv = topo.n_voices();
  for (int v = 0; v < nv; ++v)
    if (disc(topo, v))
      throw std::invalid_argument("gaussian_joint needs all-continuous voices");

  const int dim = nv * length;
  auto site = [length](int v, int n) { return v * length + n; };

  // energy = y^T A y + h^T y with A_pp = a_v and A_pq = J_pq / 2
  std::vector<std::vector<double>> a_mat(static_cast<size_t>(dim),
                                         std::vector<double>(static_cast<size_t>(dim), 0.0));
  std::vector<double> h_vec(static_cast<size_t>(dim), 0.0);
  for (int v = 0; v < nv; ++v)
    for (int n = 0; n < length; ++n) {
      a_mat[static_cast<size_t>(site(v, n))][static_cast<size_t>(site(v, n))] =
          params.quad_coeff(v);
      h_vec[static_cast<size_t>(site(v, n))] = params.cont_field(v);
    }
  auto couple = [&](int p, int q, double j) {
    a_mat[static_cast<size_t>(p)][static_cast<size_t>(q)] += j / 2.0;
    a_mat[static_cast<size_t>(q)][static_cast<size_t>(p)] += j / 2.0;
  };
  for (int v = 0; v < nv; ++v)
    for (int k = 1; k <= topo.k_hor; ++k)
      for (int n = 0; n + k < length; ++n)
        couple(site(v, n), site(v, n + k), params.hor(v, k)[0]);
  for (int a = 0; a < nv; ++a)
    for (int b = a + 1; b < nv; ++b)
      for (int n = 0; n < length; ++n)
        couple(site(a, n), site(b, n), params.vert(a, b)[0]);
  for (int a = 0; a < nv; ++a)
    for (int b = 0; b < nv; ++b) {
      if (a == b) continue;
      for (int k = 1; k <= topo.k_diag; ++k)
        for (int n = 0; n + k < length; ++n)
          couple(site(a, n), site(b, n + k), params.diag(a, b, k)[0]);
    }

  GaussianJoint joint;
  std::vector<std::vector<double>> precision(static_cast<size_t>(dim),
                                             std::vector<double>(static_cast<size_t>(dim)));
  for (int p = 0; p < dim; ++p)
    for (int q = 0; q < dim; ++q)
      precision[static_cast<size_t>(p)][static_cast<size_t>(q)] =
          2.0 * a_mat[static_cast<size_t>(p)][static_cast<size_t>(q)];
  joint.covariance = invert_matrix(precision);
  joint.precision = std::move(precision);
  joint.mean.assign(static_cast<size_t>(dim), 0.0);
  for (int p = 0; p < dim; ++p) {
    double m = 0.0;
    for (int q = 0; q < dim; ++q)
      m += joint.covariance[static_cast<size_t>(p)][static_cast<size_t>(q)] *
           (-h_vec[static_cast<size_t>(q)]);
    joint.mean[static_cast<size_t>(p)] = m;
  }
  return joint;
}

// ---- renormalized single-site conditionals ----

double renormalized_site_nll(const ModelParams& params, const Sequence& seq,
                             int voice, int note) {
  const Topology& topo = params.topology();
  Sequence work = seq;

  if (disc(topo, voice)) {
    const int q = qof(topo, voice);
    std::vector<double> energy(static_cast<size_t>(q));
    for (int c = 0; c < q; ++c) {
      work.disc(voice)[static_cast<size_t>(note)] = c;
      energy[static_cast<size_t>(c)] = full_energy(params, work);
    }
    double emin = energy[0];
    for (double e : energy) emin = std::min(emin, e);
    double z = 0.0;
    for (double e : energy) z += std::exp(-(e - emin));
    const int observed = seq.disc_at(voice, note);
    return energy[static_cast<size_t>(observed)] - emin + std::log(z);
  }

  // g(y) = H(y) - H(0) is an exact parabola in y; locate its vertex, then
  // integrate exp(-g) by Simpson over a generous window around it
  auto g = [&](double y) {
    work.cont(voice)[static_cast<size_t>(note)] = y;
    return full_energy(params, work);
  };
  const double g0 = g(0.0);
  const double gp = g(1.0) - g0;
  const double gm = g(-1.0) - g0;
  const double a = (gp + gm) / 2.0;
  const double b = (gp - gm) / 2.0;
  const double mu = -b / (2.0 * a);
  const double sigma = std::sqrt(1.0 / (2.0 * a));

  const int intervals = 4000;  // even
  const double lo = mu - 12.0 * sigma;
  const double hi = mu + 12.0 * sigma;
  const double h = (hi - lo) / intervals;
  double integral = 0.0;
  const double gmu = g(mu) - g0;
  for (int i = 0; i <= intervals; ++i) {
    const double y = lo + i * h;
    const double weight = (i == 0 || i == intervals) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    integral += weight * std::exp(-((g(y) - g0) - gmu));
  }
  integral *= h / 3.0;
  const double observed = seq.cont_at(voice, note);
  // -log p(y_obs) = g(y_obs) - g(mu) + log integral(exp(-(g - g(mu))))
  return (g(observed) - g0) - gmu + std::log(integral);
}

std::vector<double> fd_gradient(const ModelParams& params, const WindowBatch& batch,
                                double l2, double step) {
  ModelParams work = params;
  const int np = work.layout().size();
  std::vector<double> grad(static_cast<size_t>(np));
  auto theta = work.theta();
  for (int i = 0; i < np; ++i) {
    const double saved = theta[static_cast<size_t>(i)];
    theta[static_cast<size_t>(i)] = saved + step;
    const double up = negative_pseudo_loglik(work, batch, l2).total;
    theta[static_cast<size_t>(i)] = saved - step;
    const double down = negative_pseudo_loglik(work, batch, l2).total;
    theta[static_cast<size_t>(i)] = saved;
    grad[static_cast<size_t>(i)] = (up - down) / (2.0 * step);
  }
  return grad;
}

}  // namespace maxent::testing
