// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>

#include <fmt/format.h>

#include "mkv/mimic.h"

namespace mkv {

FeatureMap FeatureMap::moments(unsigned k) {
  if (k == 0) throw std::invalid_argument("feature map needs at least the mean");
  FeatureMap f;
  f.moments_ = k;
  return f;
}

FeatureMap FeatureMap::moments_and_basis(unsigned k, TestBasis basis) {
  FeatureMap f = moments(k);
  f.basis_ = basis.functions();
  return f;
}

FeatureMap FeatureMap::constant() {
  FeatureMap f;
  f.constant_ = true;
  return f;
}

std::size_t FeatureMap::size() const { return constant_ ? 1 : moments_ + basis_.size(); }

std::vector<double> FeatureMap::operator()(const MeasureView& m) const {
  if (constant_) return {0.0};
  std::vector<double> out;
  out.reserve(size());
  out.push_back(m.mean()[0]);
  for (unsigned k = 2; k <= moments_; ++k) out.push_back(m.central_moment(k));
  for (const auto& phi : basis_) out.push_back(m.pair(phi));
  return out;
}

std::vector<std::string> FeatureMap::names() const {
  if (constant_) return {"const"};
  std::vector<std::string> out{"mean"};
  for (unsigned k = 2; k <= moments_; ++k) out.push_back(fmt::format("cmoment{}", k));
  for (std::size_t i = 0; i < basis_.size(); ++i) out.push_back(fmt::format("phi{}", i + 1));
  return out;
}

std::string FeatureMap::describe() const {
  if (constant_) return "constant";
  return basis_.empty() ? fmt::format("moments({})", moments_)
                        : fmt::format("moments({})+bumps({})", moments_, basis_.size());
}

void ProjectionSlice::append(std::uint64_t scen, double xi, std::span<const double> f, double bi, double ssi,
                             std::span<const double> ex) {
  if (f.size() != n_features) throw std::invalid_argument("projection row has the wrong number of features");
  if (ex.size() != n_extra) throw std::invalid_argument("projection row has the wrong number of extra channels");
  extra.insert(extra.end(), ex.begin(), ex.end());
  scenario.push_back(scen);
  x.push_back(xi);
  features.insert(features.end(), f.begin(), f.end());
  b.push_back(bi);
  ss.push_back(ssi);
}

ProjectionSample sample_at(const ProjectionSlice& s, std::size_t row) {
  return {s.t, s.x[row], std::span<const double>(s.features.data() + row * s.n_features, s.n_features),
          s.b[row], s.ss[row], s.scenario[row]};
}

namespace {

double silverman(const std::vector<double>& v) {
  const double n = static_cast<double>(v.size());
  if (v.size() < 2) return 1.0;
  double m = 0.0;
  for (double x : v) m += x;
  m /= n;
  double var = 0.0;
  for (double x : v) var += (x - m) * (x - m);
  var /= n - 1.0;
  const double sd = std::sqrt(var);
  // Degenerate spread: any positive bandwidth gives identical weights.
  if (!(sd > 1e-300)) return 1.0;
  return 1.06 * sd * std::pow(n, -0.2);
}

}  // namespace

ProjectedCoefficients::ProjectedCoefficients(const std::vector<ProjectionSlice>& slices,
                                             const ProjectionOptions& options)
    : options_(options) {
  if (slices.empty()) throw std::invalid_argument("projection needs at least one time slice");
  n_features_ = slices.front().n_features;
  n_extra_ = slices.front().n_extra;
  for (std::size_t i = 1; i < slices.size(); ++i)
    if (!(slices[i].t > slices[i - 1].t)) throw std::invalid_argument("projection slices must be in time order");
  const std::size_t F = n_features_;
  for (const auto& in : slices) {
    if (in.n_features != F || in.n_extra != n_extra_)
      throw std::invalid_argument("projection slices disagree on the feature or channel count");
    Slice s;
    s.t = in.t;
    s.usable = in.size() >= options.min_slice_samples && in.size() > 0;
    if (!s.usable) {
      slices_.push_back(std::move(s));
      continue;
    }
    // Group rows by scenario in order of first appearance.
    std::map<std::uint64_t, std::size_t> group_of;
    std::vector<std::size_t> row_group(in.size());
    for (std::size_t r = 0; r < in.size(); ++r) {
      auto [it, fresh] = group_of.emplace(in.scenario[r], group_of.size());
      if (fresh)
        s.group_features.insert(s.group_features.end(), in.features.begin() + static_cast<std::ptrdiff_t>(r * F),
                                in.features.begin() + static_cast<std::ptrdiff_t>((r + 1) * F));
      row_group[r] = it->second;
    }
    const std::size_t groups = group_of.size();

    s.hx = options.x_bandwidth > 0.0 ? options.x_bandwidth : silverman(in.x);
    s.hf.assign(F, 1.0);
    s.fmin.assign(F, 0.0);
    s.fmax.assign(F, 0.0);
    for (std::size_t k = 0; k < F; ++k) {
      std::vector<double> col(groups);
      for (std::size_t g = 0; g < groups; ++g) col[g] = s.group_features[g * F + k];
      s.fmin[k] = *std::min_element(col.begin(), col.end());
      s.fmax[k] = *std::max_element(col.begin(), col.end());
      if (k < options.feature_bandwidths.size() && options.feature_bandwidths[k] > 0.0)
        s.hf[k] = options.feature_bandwidths[k];
      else
        s.hf[k] = silverman(col);
    }

    s.lo = *std::min_element(in.x.begin(), in.x.end());
    s.hi = *std::max_element(in.x.begin(), in.x.end());
    s.dx = s.hx / 4.0;
    s.x0 = s.lo - 4.0 * s.hx;
    s.G = static_cast<std::size_t>(std::ceil((s.hi - s.lo + 8.0 * s.hx) / s.dx)) + 1;
    const std::size_t E = n_extra_, GG = groups * s.G;
    std::vector<double> cnt(GG, 0.0), sb(GG, 0.0), sss(GG, 0.0), sex(E * GG, 0.0);
    for (std::size_t r = 0; r < in.size(); ++r) {
      const double u = (in.x[r] - s.x0) / s.dx;
      const auto i = std::min(static_cast<std::size_t>(u), s.G - 2);
      const double f = u - static_cast<double>(i);
      const std::size_t base = row_group[r] * s.G + i;
      cnt[base] += 1.0 - f;
      cnt[base + 1] += f;
      sb[base] += (1.0 - f) * in.b[r];
      sb[base + 1] += f * in.b[r];
      sss[base] += (1.0 - f) * in.ss[r];
      sss[base + 1] += f * in.ss[r];
      for (std::size_t e = 0; e < E; ++e) {
        sex[e * GG + base] += (1.0 - f) * in.extra[r * E + e];
        sex[e * GG + base + 1] += f * in.extra[r * E + e];
      }
    }
    const int taps = 16;
    std::vector<double> ker(2 * taps + 1);
    for (int j = -taps; j <= taps; ++j) {
      const double z = j * s.dx / s.hx;
      ker[static_cast<std::size_t>(j + taps)] = std::exp(-0.5 * z * z);
    }
    s.den.assign(groups * s.G, 0.0);
    s.num_b.assign(groups * s.G, 0.0);
    s.num_ss.assign(groups * s.G, 0.0);
    s.num_extra.assign(E * GG, 0.0);
    const auto G = static_cast<long>(s.G);
    for (std::size_t g = 0; g < groups; ++g)
      for (long i = 0; i < G; ++i) {
        const std::size_t src = g * s.G + static_cast<std::size_t>(i);
        if (cnt[src] == 0.0) continue;
        for (int j = -taps; j <= taps; ++j) {
          const long q = i + j;
          if (q < 0 || q >= G) continue;
          const double w = ker[static_cast<std::size_t>(j + taps)];
          const std::size_t dst = g * s.G + static_cast<std::size_t>(q);
          s.den[dst] += w * cnt[src];
          s.num_b[dst] += w * sb[src];
          s.num_ss[dst] += w * sss[src];
          for (std::size_t e = 0; e < E; ++e) s.num_extra[e * GG + dst] += w * sex[e * GG + src];
        }
      }
    slices_.push_back(std::move(s));
  }
  if (unusable_slices() == slices_.size()) throw std::invalid_argument("no time slice has enough samples");
}

std::size_t ProjectedCoefficients::unusable_slices() const {
  return static_cast<std::size_t>(std::count_if(slices_.begin(), slices_.end(), [](const Slice& s) { return !s.usable; }));
}

std::vector<double> ProjectedCoefficients::slice_grid(std::size_t i) const {
  const auto& s = slices_.at(i);
  std::vector<double> g(s.G);
  for (std::size_t q = 0; q < s.G; ++q) g[q] = s.x0 + s.dx * static_cast<double>(q);
  return g;
}

void ProjectedCoefficients::combine(const Slice& s, std::span<const double> features, double weight,
                                    StepTable& out) const {
  const std::size_t F = n_features_, groups = s.group_features.size() / F;
  std::vector<double> w(groups, 1.0);
  if (options_.mode == ProjectionMode::conditional) {
    if (features.size() != F) throw std::invalid_argument("query has the wrong number of features");
    for (std::size_t k = 0; k < F; ++k)
      if (features[k] < s.fmin[k] || features[k] > s.fmax[k]) out.feat_extrap_ = true;
    std::vector<double> q(groups, 0.0);
    for (std::size_t g = 0; g < groups; ++g)
      for (std::size_t k = 0; k < F; ++k) {
        const double z = (features[k] - s.group_features[g * F + k]) / s.hf[k];
        q[g] += z * z;
      }
    const double qmin = *std::min_element(q.begin(), q.end());
    for (std::size_t g = 0; g < groups; ++g) w[g] = std::exp(-0.5 * (q[g] - qmin));
  }
  StepTable::Part p;
  p.weight = weight;
  p.x0 = s.x0;
  p.dx = s.dx;
  p.lo = s.lo;
  p.hi = s.hi;
  p.b.assign(s.G, 0.0);
  p.ss.assign(s.G, 0.0);
  const std::size_t E = n_extra_, GG = groups * s.G;
  p.extra.assign(E * s.G, 0.0);
  std::vector<double> den(s.G, 0.0);
  for (std::size_t g = 0; g < groups; ++g) {
    const double wg = w[g];
    if (wg == 0.0) continue;
    const double* d = s.den.data() + g * s.G;
    const double* nb = s.num_b.data() + g * s.G;
    const double* ns = s.num_ss.data() + g * s.G;
    for (std::size_t q = 0; q < s.G; ++q) {
      den[q] += wg * d[q];
      p.b[q] += wg * nb[q];
      p.ss[q] += wg * ns[q];
    }
    for (std::size_t e = 0; e < E; ++e) {
      const double* ne = s.num_extra.data() + e * GG + g * s.G;
      double* pe = p.extra.data() + e * s.G;
      for (std::size_t q = 0; q < s.G; ++q) pe[q] += wg * ne[q];
    }
  }
  // Points with no kernel mass take the value of the nearest point that has some.
  constexpr double tiny = 1e-280;
  long last = -1;
  for (std::size_t q = 0; q < s.G; ++q) {
    if (den[q] > tiny) {
      p.b[q] /= den[q];
      p.ss[q] /= den[q];
      for (std::size_t e = 0; e < E; ++e) p.extra[e * s.G + q] /= den[q];
      last = static_cast<long>(q);
    } else {
      p.b[q] = p.ss[q] = std::numeric_limits<double>::quiet_NaN();
    }
  }
  if (last < 0) throw std::runtime_error("projection slice has no kernel mass");
  long prev = -1;
  for (std::size_t q = 0; q < s.G; ++q) {
    if (!std::isnan(p.b[q])) {
      prev = static_cast<long>(q);
      continue;
    }
    long next = -1;
    for (std::size_t r = q + 1; r < s.G; ++r)
      if (!std::isnan(p.b[r])) {
        next = static_cast<long>(r);
        break;
      }
    const long src = prev < 0 ? next : (next < 0 ? prev : (static_cast<long>(q) - prev <= next - static_cast<long>(q) ? prev : next));
    p.b[q] = p.b[static_cast<std::size_t>(src)];
    p.ss[q] = p.ss[static_cast<std::size_t>(src)];
    for (std::size_t e = 0; e < E; ++e) p.extra[e * s.G + q] = p.extra[e * s.G + static_cast<std::size_t>(src)];
  }
  out.n_extra_ = E;
  out.parts_.push_back(std::move(p));
}

ProjectedCoefficients::StepTable ProjectedCoefficients::table(double t, std::span<const double> features) const {
  StepTable out;
  std::vector<std::size_t> usable;
  for (std::size_t i = 0; i < slices_.size(); ++i)
    if (slices_[i].usable) usable.push_back(i);
  // Nearest slice overall; a fallback if that one is unusable.
  std::size_t nearest = 0;
  for (std::size_t i = 1; i < slices_.size(); ++i)
    if (std::abs(slices_[i].t - t) < std::abs(slices_[nearest].t - t)) nearest = i;
  out.slice_fallback_ = !slices_[nearest].usable;
  const auto& first = slices_[usable.front()];
  const auto& last = slices_[usable.back()];
  if (t <= first.t) {
    combine(first, features, 1.0, out);
  } else if (t >= last.t) {
    combine(last, features, 1.0, out);
  } else {
    std::size_t k = 0;
    while (slices_[usable[k + 1]].t < t) ++k;
    const auto& a = slices_[usable[k]];
    const auto& b = slices_[usable[k + 1]];
    const double lam = (t - a.t) / (b.t - a.t);
    if (lam < 1.0) combine(a, features, 1.0 - lam, out);
    if (lam > 0.0) combine(b, features, lam, out);
  }
  return out;
}

ProjectedCoefficients::Value ProjectedCoefficients::StepTable::operator()(double x) const {
  Value v;
  v.extrapolated = feat_extrap_;
  for (const auto& p : parts_) {
    double xc = x;
    if (xc < p.lo || xc > p.hi) {
      v.extrapolated = true;
      xc = std::clamp(xc, p.lo, p.hi);
    }
    const double u = (xc - p.x0) / p.dx;
    const auto n = p.b.size();
    const auto i = std::min(static_cast<std::size_t>(u), n - 2);
    const double f = u - static_cast<double>(i);
    v.b += p.weight * ((1.0 - f) * p.b[i] + f * p.b[i + 1]);
    v.ss += p.weight * ((1.0 - f) * p.ss[i] + f * p.ss[i + 1]);
  }
  return v;
}

void ProjectedCoefficients::StepTable::extra(double x, std::span<double> out) const {
  if (out.size() != n_extra_) throw std::invalid_argument("extra channel buffer has the wrong size");
  std::fill(out.begin(), out.end(), 0.0);
  for (const auto& p : parts_) {
    const double xc = std::clamp(x, p.lo, p.hi);
    const double u = (xc - p.x0) / p.dx;
    const auto n = p.b.size();
    const auto i = std::min(static_cast<std::size_t>(u), n - 2);
    const double f = u - static_cast<double>(i);
    for (std::size_t e = 0; e < n_extra_; ++e)
      out[e] += p.weight * ((1.0 - f) * p.extra[e * n + i] + f * p.extra[e * n + i + 1]);
  }
}

double ProjectedCoefficients::StepTable::lo() const {
  double v = INFINITY;
  for (const auto& p : parts_) v = std::min(v, p.lo);
  return v;
}

double ProjectedCoefficients::StepTable::hi() const {
  double v = -INFINITY;
  for (const auto& p : parts_) v = std::max(v, p.hi);
  return v;
}

ProjectedCoefficients markovian_projection(const std::vector<ProjectionSlice>& slices,
                                           const ProjectionOptions& options) {
  return ProjectedCoefficients(slices, options);
}

namespace {

struct MimicCache final : StepCache {
  ProjectedCoefficients::StepTable table;
  std::unique_ptr<StepCache> gamma_cache;
};

}  // namespace

MimickedField::MimickedField(std::shared_ptr<const ProjectedCoefficients> proj, FeatureMap features,
                             FieldPtr gamma_source)
    : proj_(std::move(proj)),
      features_(std::move(features)),
      gamma_(std::move(gamma_source)),
      extrap_(std::make_shared<std::atomic<std::size_t>>(0)) {
  if (!proj_ || !gamma_) throw std::invalid_argument("mimicked field needs a projection and a gamma source");
  if (gamma_->dim() != 1) throw std::invalid_argument("mimicked field is implemented for d = 1");
  if (proj_->mode() == ProjectionMode::conditional && features_.size() != proj_->n_features())
    throw std::invalid_argument("feature map does not match the fitted projection");
}

std::unique_ptr<StepCache> MimickedField::prepare(const EvalContext& c) const {
  if (!c.measure) throw std::invalid_argument("mimicked field needs the current measure");
  auto cache = std::make_unique<MimicCache>();
  const auto f = proj_->mode() == ProjectionMode::conditional ? features_(*c.measure) : std::vector<double>{};
  cache->table = proj_->table(c.t, f);
  cache->gamma_cache = gamma_->prepare(c);
  return cache;
}

const ProjectedCoefficients::StepTable& MimickedField::table(const EvalContext& c) const {
  const auto* cache = dynamic_cast<const MimicCache*>(c.cache);
  if (!cache) throw std::logic_error("mimicked field evaluated without its step cache");
  return cache->table;
}

void MimickedField::drift(const EvalContext& c, std::span<const double> x, std::span<double> out) const {
  const auto v = table(c)(x[0]);
  if (v.extrapolated) extrap_->fetch_add(1, std::memory_order_relaxed);
  out[0] = v.b;
}

void MimickedField::sigma(const EvalContext& c, std::span<const double> x, std::span<double> out) const {
  const auto v = table(c)(x[0]);
  out[0] = std::sqrt(std::max(0.0, v.ss));
}

void MimickedField::gamma(const EvalContext& c, std::span<const double> x, std::span<double> out) const {
  const auto* cache = dynamic_cast<const MimicCache*>(c.cache);
  EvalContext inner = c;
  inner.cache = cache ? cache->gamma_cache.get() : nullptr;
  gamma_->gamma(inner, x, out);
}

}  // namespace mkv
