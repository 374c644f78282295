#include "maxent/model_core.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace maxent {

using nlohmann::json;

namespace {

int voice_q(const Topology& topo, int v) { return topo.voices[static_cast<size_t>(v)].q; }
bool voice_disc(const Topology& topo, int v) {
  return topo.voices[static_cast<size_t>(v)].discrete();
}

}  // namespace

ParamLayout::ParamLayout(const Topology& topo) : topo_(&topo) {
  topo.validate();
  const int nv = topo.n_voices();
  int off = 0;

  field_off_.resize(static_cast<size_t>(nv));
  for (int v = 0; v < nv; ++v) {
    field_off_[static_cast<size_t>(v)] = off;
    off += voice_disc(topo, v) ? voice_q(topo, v) : 2;
  }

  hor_off_.assign(static_cast<size_t>(nv * topo.k_hor), -1);
  for (int v = 0; v < nv; ++v) {
    const int block = voice_disc(topo, v) ? voice_q(topo, v) * voice_q(topo, v) : 1;
    for (int k = 1; k <= topo.k_hor; ++k) {
      hor_off_[static_cast<size_t>(v * topo.k_hor + (k - 1))] = off;
      off += block;
    }
  }

  vert_off_.assign(static_cast<size_t>(nv * nv), -1);
  for (int a = 0; a < nv; ++a)
    for (int b = a + 1; b < nv; ++b) {
      vert_off_[static_cast<size_t>(a * nv + b)] = off;
      off += pair_block_size(a, b);
    }

  diag_off_.assign(static_cast<size_t>(nv * nv * topo.k_diag), -1);
  for (int a = 0; a < nv; ++a)
    for (int b = 0; b < nv; ++b) {
      if (a == b) continue;
      for (int k = 1; k <= topo.k_diag; ++k) {
        diag_off_[static_cast<size_t>((a * nv + b) * topo.k_diag + (k - 1))] = off;
        off += pair_block_size(a, b);
      }
    }

  total_ = off;
  is_a_.assign(static_cast<size_t>(total_), false);
  for (int v = 0; v < nv; ++v)
    if (!voice_disc(topo, v))
      is_a_[static_cast<size_t>(field_off_[static_cast<size_t>(v)] + 1)] = true;
}

int ParamLayout::field_size(int v) const {
  return voice_disc(*topo_, v) ? voice_q(*topo_, v) : 2;
}

int ParamLayout::hor_offset(int v, int k) const {
  return hor_off_[static_cast<size_t>(v * topo_->k_hor + (k - 1))];
}

int ParamLayout::hor_size(int v) const {
  return voice_disc(*topo_, v) ? voice_q(*topo_, v) * voice_q(*topo_, v) : 1;
}

int ParamLayout::vert_offset(int a, int b) const {
  return vert_off_[static_cast<size_t>(a * topo_->n_voices() + b)];
}

int ParamLayout::vert_size(int a, int b) const { return pair_block_size(a, b); }

int ParamLayout::diag_offset(int a, int b, int k) const {
  return diag_off_[static_cast<size_t>((a * topo_->n_voices() + b) * topo_->k_diag + (k - 1))];
}

int ParamLayout::diag_size(int a, int b) const { return pair_block_size(a, b); }

int ParamLayout::pair_block_size(int a, int b) const {
  const bool da = voice_disc(*topo_, a);
  const bool db = voice_disc(*topo_, b);
  if (da && db) return voice_q(*topo_, a) * voice_q(*topo_, b);
  if (da) return voice_q(*topo_, a);
  if (db) return voice_q(*topo_, b);
  return 1;
}

ModelParams::ModelParams(Topology topo)
    : topo_(std::move(topo)), layout_(topo_), theta_(static_cast<size_t>(layout_.size()), 0.0) {}

std::span<double> ModelParams::disc_field(int v) {
  return {theta_.data() + layout_.field_offset(v), static_cast<size_t>(layout_.field_size(v))};
}
std::span<const double> ModelParams::disc_field(int v) const {
  return {theta_.data() + layout_.field_offset(v), static_cast<size_t>(layout_.field_size(v))};
}
double& ModelParams::cont_field(int v) { return theta_[static_cast<size_t>(layout_.field_offset(v))]; }
double ModelParams::cont_field(int v) const { return theta_[static_cast<size_t>(layout_.field_offset(v))]; }
double& ModelParams::quad_coeff(int v) { return theta_[static_cast<size_t>(layout_.field_offset(v) + 1)]; }
double ModelParams::quad_coeff(int v) const { return theta_[static_cast<size_t>(layout_.field_offset(v) + 1)]; }

std::span<double> ModelParams::hor(int v, int k) {
  return {theta_.data() + layout_.hor_offset(v, k), static_cast<size_t>(layout_.hor_size(v))};
}
std::span<const double> ModelParams::hor(int v, int k) const {
  return {theta_.data() + layout_.hor_offset(v, k), static_cast<size_t>(layout_.hor_size(v))};
}
std::span<double> ModelParams::vert(int a, int b) {
  return {theta_.data() + layout_.vert_offset(a, b), static_cast<size_t>(layout_.vert_size(a, b))};
}
std::span<const double> ModelParams::vert(int a, int b) const {
  return {theta_.data() + layout_.vert_offset(a, b), static_cast<size_t>(layout_.vert_size(a, b))};
}
std::span<double> ModelParams::diag(int a, int b, int k) {
  return {theta_.data() + layout_.diag_offset(a, b, k), static_cast<size_t>(layout_.diag_size(a, b))};
}
std::span<const double> ModelParams::diag(int a, int b, int k) const {
  return {theta_.data() + layout_.diag_offset(a, b, k), static_cast<size_t>(layout_.diag_size(a, b))};
}

void NeighborhoodValues::resize(const Topology& topo) {
  hor_left.assign(static_cast<size_t>(topo.k_hor), {});
  hor_right.assign(static_cast<size_t>(topo.k_hor), {});
  vert.assign(static_cast<size_t>(topo.n_voices()), {});
  diag_back.assign(static_cast<size_t>(topo.n_voices() * topo.k_diag), {});
  diag_fwd.assign(static_cast<size_t>(topo.n_voices() * topo.k_diag), {});
}

void gather_neighborhood(const Sequence& seq, const Topology& topo, int v,
                         int n, NeighborhoodValues& nb) {
  if (nb.vert.size() != static_cast<size_t>(topo.n_voices())) nb.resize(topo);
  nb.voice = v;
  const int len = seq.length();

  auto fill = [&](NeighborhoodValues::Slot& slot, int voice, int pos) {
    if (pos < 0 || pos >= len) {
      slot.present = false;
      return;
    }
    slot.present = true;
    if (seq.voice_discrete(voice))
      slot.x = seq.disc_at(voice, pos);
    else
      slot.y = seq.cont_at(voice, pos);
  };

  for (int k = 1; k <= topo.k_hor; ++k) {
    fill(nb.hor_left[static_cast<size_t>(k - 1)], v, n - k);
    fill(nb.hor_right[static_cast<size_t>(k - 1)], v, n + k);
  }
  for (int u = 0; u < topo.n_voices(); ++u) {
    if (u == v) {
      nb.vert[static_cast<size_t>(u)].present = false;
      continue;
    }
    fill(nb.vert[static_cast<size_t>(u)], u, n);
  }
  for (int u = 0; u < topo.n_voices(); ++u)
    for (int k = 1; k <= topo.k_diag; ++k) {
      auto& back = nb.diag_back[static_cast<size_t>(u * topo.k_diag + (k - 1))];
      auto& fwd = nb.diag_fwd[static_cast<size_t>(u * topo.k_diag + (k - 1))];
      if (u == v) {
        back.present = fwd.present = false;
        continue;
      }
      fill(back, u, n - k);
      fill(fwd, u, n + k);
    }
}

namespace {

/* Coupling term between the target (category x or value y) and one
 * neighbor slot. `first` says whether the target owns the earlier position
 * of the stored block (rows / the first kind letter). */
inline double pair_term_disc(std::span<const double> block, bool target_first,
                             int x, const NeighborhoodValues::Slot& nbr,
                             bool nbr_disc, int q_target, int q_nbr) {
  if (nbr_disc) {
    return target_first ? block[static_cast<size_t>(x * q_nbr + nbr.x)]
                        : block[static_cast<size_t>(nbr.x * q_target + x)];
  }
  (void)q_target;
  return block[static_cast<size_t>(x)] * nbr.y;
}

inline double pair_term_cont(std::span<const double> block, double y,
                             const NeighborhoodValues::Slot& nbr, bool nbr_disc) {
  return nbr_disc ? block[static_cast<size_t>(nbr.x)] * y : block[0] * y * nbr.y;
}

}  // namespace

void category_energies(const NeighborhoodValues& nb, const ModelParams& params,
                       std::span<double> energies) {
  const Topology& topo = params.topology();
  const int v = nb.voice;
  if (!voice_disc(topo, v))
    throw ValidationError("category_energies: voice " + std::to_string(v) +
                          " is continuous");
  const int q = voice_q(topo, v);
  const auto h = params.disc_field(v);
  for (int c = 0; c < q; ++c) energies[static_cast<size_t>(c)] = h[static_cast<size_t>(c)];

  for (int k = 1; k <= topo.k_hor; ++k) {
    const auto block = params.hor(v, k);
    const auto& left = nb.hor_left[static_cast<size_t>(k - 1)];
    const auto& right = nb.hor_right[static_cast<size_t>(k - 1)];
    if (right.present)
      for (int c = 0; c < q; ++c)
        energies[static_cast<size_t>(c)] += block[static_cast<size_t>(c * q + right.x)];
    if (left.present)
      for (int c = 0; c < q; ++c)
        energies[static_cast<size_t>(c)] += block[static_cast<size_t>(left.x * q + c)];
  }
  for (int u = 0; u < topo.n_voices(); ++u) {
    const auto& slot = nb.vert[static_cast<size_t>(u)];
    if (!slot.present) continue;
    const bool ud = voice_disc(topo, u);
    const auto block = u > v ? params.vert(v, u) : params.vert(u, v);
    const bool target_first = v < u;
    for (int c = 0; c < q; ++c)
      energies[static_cast<size_t>(c)] +=
          pair_term_disc(block, target_first, c, slot, ud, q, voice_q(topo, u));
  }
  for (int u = 0; u < topo.n_voices(); ++u) {
    if (u == v) continue;
    const bool ud = voice_disc(topo, u);
    for (int k = 1; k <= topo.k_diag; ++k) {
      const auto& fwd = nb.diag_fwd[static_cast<size_t>(u * topo.k_diag + (k - 1))];
      if (fwd.present) {
        const auto block = params.diag(v, u, k);
        for (int c = 0; c < q; ++c)
          energies[static_cast<size_t>(c)] +=
              pair_term_disc(block, true, c, fwd, ud, q, voice_q(topo, u));
      }
      const auto& back = nb.diag_back[static_cast<size_t>(u * topo.k_diag + (k - 1))];
      if (back.present) {
        const auto block = params.diag(u, v, k);
        for (int c = 0; c < q; ++c)
          energies[static_cast<size_t>(c)] +=
              pair_term_disc(block, false, c, back, ud, q, voice_q(topo, u));
      }
    }
  }
}

double local_energy(int x, const NeighborhoodValues& nb, const ModelParams& params) {
  const Topology& topo = params.topology();
  const int v = nb.voice;
  if (!voice_disc(topo, v))
    throw ValidationError("local_energy: discrete value for continuous voice " +
                          std::to_string(v));
  const int q = voice_q(topo, v);
  if (x < 0 || x >= q)
    throw ValidationError("local_energy: category " + std::to_string(x) +
                          " outside [0, " + std::to_string(q) + ")");
  std::vector<double> energies(static_cast<size_t>(q));
  category_energies(nb, params, energies);
  return energies[static_cast<size_t>(x)];
}

namespace {

// linear coefficient of y in the local energy of a continuous site
double linear_coefficient(const NeighborhoodValues& nb, const ModelParams& params) {
  const Topology& topo = params.topology();
  const int v = nb.voice;
  double b = params.cont_field(v);

  for (int k = 1; k <= topo.k_hor; ++k) {
    const auto block = params.hor(v, k);
    const auto& left = nb.hor_left[static_cast<size_t>(k - 1)];
    const auto& right = nb.hor_right[static_cast<size_t>(k - 1)];
    if (left.present) b += block[0] * left.y;
    if (right.present) b += block[0] * right.y;
  }
  for (int u = 0; u < topo.n_voices(); ++u) {
    const auto& slot = nb.vert[static_cast<size_t>(u)];
    if (!slot.present) continue;
    const bool ud = voice_disc(topo, u);
    const auto block = u > v ? params.vert(v, u) : params.vert(u, v);
    b += ud ? block[static_cast<size_t>(slot.x)] : block[0] * slot.y;
  }
  for (int u = 0; u < topo.n_voices(); ++u) {
    if (u == v) continue;
    const bool ud = voice_disc(topo, u);
    for (int k = 1; k <= topo.k_diag; ++k) {
      const auto& fwd = nb.diag_fwd[static_cast<size_t>(u * topo.k_diag + (k - 1))];
      if (fwd.present) {
        const auto block = params.diag(v, u, k);
        b += ud ? block[static_cast<size_t>(fwd.x)] : block[0] * fwd.y;
      }
      const auto& back = nb.diag_back[static_cast<size_t>(u * topo.k_diag + (k - 1))];
      if (back.present) {
        const auto block = params.diag(u, v, k);
        b += ud ? block[static_cast<size_t>(back.x)] : block[0] * back.y;
      }
    }
  }
  return b;
}

}  // namespace

double local_energy(double y, const NeighborhoodValues& nb, const ModelParams& params) {
  const Topology& topo = params.topology();
  if (voice_disc(topo, nb.voice))
    throw ValidationError("local_energy: continuous value for discrete voice " +
                          std::to_string(nb.voice));
  const double a = params.quad_coeff(nb.voice);
  return a * y * y + linear_coefficient(nb, params) * y;
}

void conditional_discrete(const NeighborhoodValues& nb, const ModelParams& params,
                          std::span<double> probs) {
  const int q = voice_q(params.topology(), nb.voice);
  category_energies(nb, params, probs);  // reuse the output buffer
  double emin = probs[0];
  for (int c = 1; c < q; ++c) emin = std::min(emin, probs[static_cast<size_t>(c)]);
  double z = 0.0;
  for (int c = 0; c < q; ++c) {
    probs[static_cast<size_t>(c)] = std::exp(-(probs[static_cast<size_t>(c)] - emin));
    z += probs[static_cast<size_t>(c)];
  }
  for (int c = 0; c < q; ++c) probs[static_cast<size_t>(c)] /= z;
}

GaussianConditional conditional_continuous(const NeighborhoodValues& nb,
                                           const ModelParams& params) {
  const Topology& topo = params.topology();
  if (voice_disc(topo, nb.voice))
    throw ValidationError("conditional_continuous: voice " +
                          std::to_string(nb.voice) + " is discrete");
  const double a = params.quad_coeff(nb.voice);
  if (!(a >= kAMin))
    throw ValidationError("conditional_continuous: quadratic coefficient " +
                          std::to_string(a) + " below floor for voice " +
                          std::to_string(nb.voice));
  GaussianConditional cond;
  cond.linear_coeff = linear_coefficient(nb, params);
  cond.mean = -cond.linear_coeff / (2.0 * a);
  cond.variance = 1.0 / (2.0 * a);
  return cond;
}

// ---- model files ----

namespace {

json span_to_json(std::span<const double> s) {
  return json(std::vector<double>(s.begin(), s.end()));
}

void json_to_span(const json& j, std::span<double> s, const std::string& what) {
  if (!j.is_array() || j.size() != s.size())
    throw IoError("model: block '" + what + "' has wrong shape");
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = j[i].get<double>();
}

json topology_to_json_model(const Topology& topo) {
  json voices = json::array();
  for (const VoiceSpec& spec : topo.voices) {
    json v;
    v["kind"] = spec.discrete() ? "discrete" : "continuous";
    if (spec.discrete()) v["q"] = spec.q;
    if (!spec.name.empty()) v["name"] = spec.name;
    if (spec.range) v["range"] = {spec.range->first, spec.range->second};
    voices.push_back(std::move(v));
  }
  return json{{"voices", std::move(voices)}, {"k_hor", topo.k_hor}, {"k_diag", topo.k_diag}};
}

Topology topology_from_json_model(const json& j) {
  Topology topo;
  for (const auto& v : j.at("voices")) {
    VoiceSpec spec;
    const std::string kind = v.at("kind").get<std::string>();
    if (kind == "discrete")
      spec = VoiceSpec::make_discrete(v.at("q").get<int>());
    else
      spec = VoiceSpec::make_continuous();
    if (v.contains("name")) spec.name = v["name"].get<std::string>();
    if (v.contains("range"))
      spec.range = {v["range"][0].get<double>(), v["range"][1].get<double>()};
    topo.voices.push_back(std::move(spec));
  }
  topo.k_hor = j.at("k_hor").get<int>();
  topo.k_diag = j.at("k_diag").get<int>();
  topo.validate();
  return topo;
}

}  // namespace

std::string model_to_string(const ModelParams& params) {
  const Topology& topo = params.topology();
  json j;
  j["format_version"] = 1;
  j["topology"] = topology_to_json_model(topo);

  json fields = json::array();
  for (int v = 0; v < topo.n_voices(); ++v) {
    json f;
    f["voice"] = v;
    if (voice_disc(topo, v)) {
      f["h"] = span_to_json(params.disc_field(v));
    } else {
      f["h"] = params.cont_field(v);
      f["a"] = params.quad_coeff(v);
    }
    fields.push_back(std::move(f));
  }
  j["fields"] = std::move(fields);

  json hor = json::array();
  for (int v = 0; v < topo.n_voices(); ++v)
    for (int k = 1; k <= topo.k_hor; ++k)
      hor.push_back(json{{"voice", v}, {"k", k}, {"values", span_to_json(params.hor(v, k))}});
  json vert = json::array();
  for (int a = 0; a < topo.n_voices(); ++a)
    for (int b = a + 1; b < topo.n_voices(); ++b)
      vert.push_back(json{{"a", a}, {"b", b}, {"values", span_to_json(params.vert(a, b))}});
  json diag = json::array();
  for (int a = 0; a < topo.n_voices(); ++a)
    for (int b = 0; b < topo.n_voices(); ++b) {
      if (a == b) continue;
      for (int k = 1; k <= topo.k_diag; ++k)
        diag.push_back(json{{"a", a}, {"b", b}, {"k", k},
                            {"values", span_to_json(params.diag(a, b, k))}});
    }
  j["couplings"] = json{{"horizontal", std::move(hor)},
                        {"vertical", std::move(vert)},
                        {"diagonal", std::move(diag)}};
  j["metadata"] = json{{"style", params.style}, {"config_digest", params.config_digest}};
  return j.dump(2) + "\n";
}

ModelParams model_from_string(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& err) {
    throw IoError(std::string("model parse error: ") + err.what());
  }
  if (j.value("format_version", 0) != 1)
    throw IoError("model: unsupported format_version");

  Topology topo = topology_from_json_model(j.at("topology"));
  ModelParams params(topo);
  for (const auto& f : j.at("fields")) {
    const int v = f.at("voice").get<int>();
    if (v < 0 || v >= topo.n_voices()) throw IoError("model: field voice out of range");
    if (voice_disc(topo, v)) {
      json_to_span(f.at("h"), params.disc_field(v), "h[" + std::to_string(v) + "]");
    } else {
      params.cont_field(v) = f.at("h").get<double>();
      const double a = f.at("a").get<double>();
      if (!(a >= kAMin))
        throw ValidationError("model: quadratic coefficient " + std::to_string(a) +
                              " below floor for voice " + std::to_string(v));
      params.quad_coeff(v) = a;
    }
  }
  const auto& couplings = j.at("couplings");
  for (const auto& c : couplings.at("horizontal")) {
    const int v = c.at("voice").get<int>();
    const int k = c.at("k").get<int>();
    if (v < 0 || v >= topo.n_voices() || k < 1 || k > topo.k_hor)
      throw IoError("model: horizontal block out of range");
    json_to_span(c.at("values"), params.hor(v, k), "hor");
  }
  for (const auto& c : couplings.at("vertical")) {
    const int a = c.at("a").get<int>();
    const int b = c.at("b").get<int>();
    if (a < 0 || b <= a || b >= topo.n_voices())
      throw IoError("model: vertical block out of range");
    json_to_span(c.at("values"), params.vert(a, b), "vert");
  }
  for (const auto& c : couplings.at("diagonal")) {
    const int a = c.at("a").get<int>();
    const int b = c.at("b").get<int>();
    const int k = c.at("k").get<int>();
    if (a < 0 || b < 0 || a == b || a >= topo.n_voices() || b >= topo.n_voices() ||
        k < 1 || k > topo.k_diag)
      throw IoError("model: diagonal block out of range");
    json_to_span(c.at("values"), params.diag(a, b, k), "diag");
  }
  if (j.contains("metadata")) {
    params.style = j["metadata"].value("style", "");
    params.config_digest = j["metadata"].value("config_digest", "");
  }
  return params;
}

void save_model(const ModelParams& params, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << model_to_string(params);
}

ModelParams load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return model_from_string(buf.str());
}

}  // namespace maxent
