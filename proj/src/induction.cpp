#include "singmix/induction.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

namespace singmix {

RoofFunction unit_roof() {
  return {[](double) { return 1.0; }, [](double) { return 0.0; }};
}

RoofFunction model_roof(double g1, double g2, double lambda1) {
  if (!(lambda1 > 0.0)) throw Error(ErrorCode::InvalidInput, "lambda1 must be positive");
  return {[=](double x) { return g1 + g2 - std::log(std::abs(x)) / lambda1; },
          [=](double x) { return -1.0 / (lambda1 * x); }};
}

namespace {

const Branch& branch(const PiecewiseExpandingMap& f, int k) { return f.branches()[static_cast<std::size_t>(k)]; }

double pull(const Branch& br, double y) { return br.inverse(std::clamp(y, br.image_lo, br.image_hi)); }

// Pre-image of [a, b] under f^n along `word`.
Interval pullback(const PiecewiseExpandingMap& f, const std::vector<int>& word, double a, double b) {
  for (std::size_t i = word.size(); i-- > 0;) {
    const Branch& br = branch(f, word[i]);
    double u = pull(br, a), v = pull(br, b);
    if (u > v) std::swap(u, v);
    a = u;
    b = v;
  }
  return {a, b};
}

// x_j for j < n with f^n(x_0) = y, pulled back along `word`.
std::vector<double> chain_of(const PiecewiseExpandingMap& f, const std::vector<int>& word, double y) {
  std::vector<double> xs(word.size());
  for (std::size_t i = word.size(); i-- > 0;) {
    y = pull(branch(f, word[i]), y);
    xs[i] = y;
  }
  return xs;
}

double chain_derivative(const PiecewiseExpandingMap& f, const std::vector<int>& word, const std::vector<double>& xs) {
  double d = 1.0;
  for (std::size_t j = 0; j < xs.size(); ++j) d *= std::abs(branch(f, word[j]).derivative(xs[j]));
  return d;
}

double forward(const PiecewiseExpandingMap& f, const std::vector<int>& word, double x) {
  for (int w : word) x = branch(f, w).map(x);
  return x;
}

struct Piece {
  std::vector<int> word;
  double lo, hi;  // image under f^{word.size()}
};

struct LevelOut {
  std::vector<Piece> next;
  std::vector<InducedBranch> found;
  double pruned = 0.0;
};

struct Geometry {
  const PiecewiseExpandingMap* f;
  double lo, hi;    // Delta
  double tlo, thi;  // widened target
  const InductionOptions* opt;
};

// Per-branch checks on a grid of Delta. Returns false when the hyperbolic
// requirement fails at some sample.
bool describe(const Geometry& g, InducedBranch& br) {
  const auto& f = *g.f;
  const auto& opt = *g.opt;
  const int s = std::max(opt.samples, 2);
  std::vector<double> ys(s), logd(s);
  br.min_derivative = std::numeric_limits<double>::infinity();
  br.max_derivative = 0.0;
  br.hyperbolic = true;
  for (int k = 0; k < s; ++k) {
    ys[k] = g.lo + (g.hi - g.lo) * k / (s - 1);
    const auto xs = chain_of(f, br.itinerary, ys[k]);
    const double d = chain_derivative(f, br.itinerary, xs);
    logd[k] = std::log(d);
    br.min_derivative = std::min(br.min_derivative, d);
    br.max_derivative = std::max(br.max_derivative, d);
    // endpoints can sit on the critical set of f; interior samples decide
    if (k > 0 && k < s - 1 && br.hyperbolic) {
      const auto rec = hyperbolic_times_on_orbit(f, xs, opt.sigma, opt.b, opt.delta1);
      br.hyperbolic = std::find(rec.times.begin(), rec.times.end(), br.R) != rec.times.end();
    }
  }
  br.distortion = 0.0;
  for (int a = 0; a < s; ++a) {
    for (int c = a + 1; c < s; ++c) {
      const double q = std::abs(logd[a] - logd[c]) / std::pow(ys[c] - ys[a], opt.distortion_alpha);
      br.distortion = std::max(br.distortion, q);
    }
  }
  // Forward iteration amplifies endpoint rounding by |F'|, so the Markov
  // property is read off the pulled-back endpoint chains link by link.
  auto endpoint = [&](double e, double& image) {
    const auto xs = chain_of(f, br.itinerary, e);
    double defect = 0.0;
    for (std::size_t j = 0; j < xs.size(); ++j) {
      const double next = j + 1 < xs.size() ? xs[j + 1] : e;
      const double y = branch(f, br.itinerary[j]).map(xs[j]);
      defect = std::max(defect, std::abs(y - next));
      if (j + 1 == xs.size()) image = y;
    }
    br.markov_defect = std::max(br.markov_defect, defect);
    return xs.front();
  };
  double img_a = 0.0, img_b = 0.0;
  const double a = endpoint(g.lo, img_a), b = endpoint(g.hi, img_b);
  br.increasing = a < b;
  br.image_lo = br.increasing ? img_a : img_b;
  br.image_hi = br.increasing ? img_b : img_a;
  return br.hyperbolic || !opt.require_hyperbolic;
}

LevelOut advance(const Geometry& g, const std::vector<Piece>& pieces, std::size_t begin, std::size_t end) {
  const auto& f = *g.f;
  const double width = g.hi - g.lo;
  LevelOut out;
  auto push = [&](std::vector<int> word, double a, double b) {
    if (!(b > a)) return;
    const double mass = pullback(f, word, a, b).length() / width;
    if (mass < g.opt->prune_mass) {
      out.pruned += mass;
      return;
    }
    out.next.push_back({std::move(word), a, b});
  };
  for (std::size_t i = begin; i < end; ++i) {
    const Piece& pc = pieces[i];
    for (int k = 0; k < static_cast<int>(f.branches().size()); ++k) {
      const Branch& br = branch(f, k);
      const double a = std::max(pc.lo, br.lo), b = std::min(pc.hi, br.hi);
      if (!(b > a)) continue;
      double u = br.map(a), v = br.map(b);
      if (u > v) std::swap(u, v);
      std::vector<int> word = pc.word;
      word.push_back(k);
      if (u <= g.tlo && v >= g.thi) {
        InducedBranch ib;
        ib.R = static_cast<int>(word.size());
        ib.itinerary = word;
        const Interval J = pullback(f, word, g.lo, g.hi);
        ib.lo = J.lo;
        ib.hi = J.hi;
        if (describe(g, ib)) {
          out.found.push_back(std::move(ib));
          push(word, u, g.lo);
          push(std::move(word), g.hi, v);
          continue;
        }
      }
      push(std::move(word), u, v);
    }
  }
  return out;
}

double preimage_gap_of(const PiecewiseExpandingMap& f, double p, int depth) {
  std::vector<double> layer{p}, all{p};
  for (int d = 0; d < depth && all.size() < (1u << 15); ++d) {
    std::vector<double> next;
    for (double y : layer) {
      for (const auto& br : f.branches()) {
        if (y >= br.image_lo && y <= br.image_hi) next.push_back(br.inverse(y));
      }
    }
    all.insert(all.end(), next.begin(), next.end());
    layer = std::move(next);
  }
  all.push_back(f.lo());
  all.push_back(f.hi());
  std::sort(all.begin(), all.end());
  double gap = 0.0;
  for (std::size_t i = 1; i < all.size(); ++i) gap = std::max(gap, all[i] - all[i - 1]);
  return gap;
}

}  // namespace

InducedMarkovMap build_induced_map(const PiecewiseExpandingMap& f, const InductionOptions& opt) {
  if (!(opt.base_radius > 0.0) || !(opt.margin >= 0.0)) throw Error(ErrorCode::InvalidInput, "bad base radius or margin");
  if (opt.return_cap < 1) throw Error(ErrorCode::InvalidInput, "return cap must be positive");
  if (!(opt.coverage_floor >= 0.0 && opt.coverage_floor <= 1.0)) {
    throw Error(ErrorCode::InvalidInput, "coverage floor must lie in [0, 1]");
  }
  double p = opt.base_point;
  if (std::isnan(p)) {
    const Branch* best = &f.branches().front();
    for (const auto& br : f.branches()) {
      if (br.hi - br.lo > best->hi - best->lo) best = &br;
    }
    p = 0.5 * (best->lo + best->hi);
  }
  if (!(p >= f.lo() && p <= f.hi())) throw Error(ErrorCode::InvalidInput, "base point outside the domain");

  InducedMarkovMap F;
  F.f_ = std::make_shared<const PiecewiseExpandingMap>(f);
  F.p_ = p;
  F.lo_ = std::max(f.lo(), p - opt.base_radius);
  F.hi_ = std::min(f.hi(), p + opt.base_radius);
  F.cap_ = opt.return_cap;
  F.sigma_ = opt.sigma;
  F.b_ = opt.b;
  F.delta1_ = opt.delta1;
  F.alpha_ = opt.distortion_alpha;
  const Geometry g{F.f_.get(), F.lo_, F.hi_, std::max(f.lo(), F.lo_ - opt.margin), std::min(f.hi(), F.hi_ + opt.margin),
                   &opt};

  std::vector<Piece> frontier{{{}, F.lo_, F.hi_}};
  for (int n = 0; n < opt.return_cap && !frontier.empty(); ++n) {
    const std::size_t chunks = std::min<std::size_t>(frontier.size(), 64);
    auto parts = map_chunks<LevelOut>(chunks, opt.exec, [&](std::size_t c) {
      return advance(g, frontier, chunk_begin(frontier.size(), chunks, c), chunk_begin(frontier.size(), chunks, c + 1));
    });
    std::vector<Piece> next;
    for (auto& part : parts) {
      F.pruned_ += part.pruned;
      for (auto& b : part.found) F.branches_.push_back(std::move(b));
      for (auto& pc : part.next) next.push_back(std::move(pc));
    }
    if (next.size() > opt.max_frontier) {
      std::vector<std::pair<double, std::size_t>> mass(next.size());
      for (std::size_t i = 0; i < next.size(); ++i) {
        mass[i] = {pullback(f, next[i].word, next[i].lo, next[i].hi).length() / (F.hi_ - F.lo_), i};
      }
      // heaviest first, ties by position so the cut is deterministic
      std::sort(mass.begin(), mass.end(), [](const auto& a, const auto& b) {
        return a.first != b.first ? a.first > b.first : a.second < b.second;
      });
      std::vector<std::size_t> keep;
      for (std::size_t i = 0; i < mass.size(); ++i) {
        if (i < opt.max_frontier) {
          keep.push_back(mass[i].second);
        } else {
          F.pruned_ += mass[i].first;
        }
      }
      std::sort(keep.begin(), keep.end());
      std::vector<Piece> kept;
      kept.reserve(keep.size());
      for (std::size_t i : keep) kept.push_back(std::move(next[i]));
      next = std::move(kept);
    }
    frontier = std::move(next);
  }
  std::sort(F.branches_.begin(), F.branches_.end(), [](const auto& a, const auto& b) { return a.lo < b.lo; });

  const double width = F.hi_ - F.lo_;
  std::vector<double> by_r(static_cast<std::size_t>(opt.return_cap) + 1, 0.0);
  double min_d = std::numeric_limits<double>::infinity();
  std::size_t hyper = 0;
  for (const auto& b : F.branches_) {
    by_r[static_cast<std::size_t>(b.R)] += b.length() / width;
    min_d = std::min(min_d, b.min_derivative);
    F.distortion_ = std::max(F.distortion_, b.distortion);
    hyper += b.hyperbolic ? 1 : 0;
    F.markov_error_ = std::max(F.markov_error_, b.markov_defect);
  }
  F.coverage_ = std::accumulate(by_r.begin(), by_r.end(), 0.0);
  F.tail_.assign(by_r.size(), 0.0);
  double covered = 0.0;
  for (std::size_t n = 0; n < by_r.size(); ++n) {
    covered += by_r[n];
    F.tail_[n] = std::max(0.0, 1.0 - covered);
  }
  F.rho_ = F.branches_.empty() ? INFINITY : 1.0 / min_d;
  F.hyperbolic_fraction_ = F.branches_.empty() ? 0.0 : static_cast<double>(hyper) / F.branches_.size();
  F.preimage_gap_ = preimage_gap_of(f, p, 12);
  F.preimage_dense_ = F.preimage_gap_ <= opt.delta1 / 3.0;

  if (F.coverage_ < opt.coverage_floor) {
    std::ostringstream msg;
    msg << "enumerated branches cover " << F.coverage_ << " of the base interval (floor " << opt.coverage_floor << ")";
    throw Error(ErrorCode::IncompleteInduction, msg.str());
  }
  return F;
}

int InducedMarkovMap::branch_of(double x) const {
  auto it = std::upper_bound(branches_.begin(), branches_.end(), x, [](double v, const auto& b) { return v < b.lo; });
  if (it == branches_.begin()) return -1;
  --it;
  if (x > it->hi) return -1;
  return static_cast<int>(it - branches_.begin());
}

double InducedMarkovMap::F(double x) const {
  const int k = branch_of(x);
  if (k < 0) throw Error(ErrorCode::InvalidInput, "point outside the enumerated partition");
  return forward(*f_, branches_[k].itinerary, x);
}

double InducedMarkovMap::dF(double x) const {
  const int k = branch_of(x);
  if (k < 0) throw Error(ErrorCode::InvalidInput, "point outside the enumerated partition");
  double d = 1.0;
  for (int w : branches_[k].itinerary) {
    const Branch& br = branch(*f_, w);
    d *= br.derivative(x);
    x = br.map(x);
  }
  return d;
}

int InducedMarkovMap::R(double x) const {
  const int k = branch_of(x);
  return k < 0 ? -1 : branches_[k].R;
}

std::vector<double> InducedMarkovMap::chain(int k, double y) const {
  return chain_of(*f_, branches_.at(static_cast<std::size_t>(k)).itinerary, y);
}

double InducedMarkovMap::h(int k, double y) const { return chain(k, y).front(); }

double InducedMarkovMap::dh(int k, double y) const {
  const auto& b = branches_.at(static_cast<std::size_t>(k));
  const auto xs = chain_of(*f_, b.itinerary, y);
  double d = 1.0;
  for (std::size_t j = 0; j < xs.size(); ++j) d *= branch(*f_, b.itinerary[j]).derivative(xs[j]);
  return 1.0 / d;
}

nlohmann::json InducedMarkovMap::to_json() const {
  nlohmann::json j;
  j["delta"] = {lo_, hi_};
  j["base_point"] = p_;
  j["return_cap"] = cap_;
  j["sigma"] = sigma_;
  j["b"] = b_;
  j["delta1"] = delta1_;
  j["coverage"] = coverage_;
  j["pruned_mass"] = pruned_;
  j["rho"] = rho_;
  j["distortion_constant"] = distortion_;
  j["distortion_alpha"] = alpha_;
  j["hyperbolic_fraction"] = hyperbolic_fraction_;
  j["preimage_gap"] = preimage_gap_;
  j["preimage_dense"] = preimage_dense_;
  j["max_markov_error"] = markov_error_;
  j["tail"] = tail_;
  auto& arr = j["branches"] = nlohmann::json::array();
  for (const auto& b : branches_) {
    arr.push_back({{"interval", {b.lo, b.hi}},
                   {"R", b.R},
                   {"itinerary", b.itinerary},
                   {"endpoint_images", {b.image_lo, b.image_hi}},
                   {"markov_defect", b.markov_defect},
                   {"min_derivative", b.min_derivative},
                   {"distortion", b.distortion},
                   {"hyperbolic", b.hyperbolic}});
  }
  return j;
}

double induced_roof(const InducedMarkovMap& F, const RoofFunction& tau, double x) {
  const int k = F.branch_of(x);
  if (k < 0) throw Error(ErrorCode::InvalidInput, "point outside the enumerated partition");
  // the orbit of x is taken from the chain pulled back from F(x), which
  // contracts rounding instead of amplifying it
  double r = 0.0;
  for (double xj : F.chain(k, F.F(x))) r += tau.value(xj);
  return r;
}

std::string InducedRoof::histogram_csv() const {
  std::ostringstream os;
  os.precision(17);
  os << "t,measure\n";
  for (std::size_t i = 0; i < thresholds.size(); ++i) os << thresholds[i] << ',' << measure[i] << '\n';
  return os.str();
}

RoofResult induced_roof_and_checks(const InducedMarkovMap& F, const RoofFunction& tau, const RoofOptions& opt) {
  if (F.branches().empty()) throw Error(ErrorCode::InvalidInput, "induced map has no branches");
  const auto& f = F.base();
  const double lo = F.delta_lo(), hi = F.delta_hi(), width = hi - lo;
  const int cells = std::max(opt.cells, 1);
  const int cap = F.return_cap();
  const double b_log_sigma = F.b() * std::log(F.sigma());

  RoofResult res;
  auto& roof = res.roof;
  auto& chk = res.checks;
  roof.inf_tau = std::numeric_limits<double>::infinity();
  std::vector<double> cell_r, cell_mass;
  std::vector<double> k_by_r(static_cast<std::size_t>(cap) + 1, -std::numeric_limits<double>::infinity());
  for (const auto& br : F.branches()) {
    InducedRoofBranch rb;
    rb.inf_r = std::numeric_limits<double>::infinity();
    double prev_x0 = 0.0;
    for (int c = 0; c <= 2 * cells; ++c) {
      const double y = lo + width * c / (2.0 * cells);
      const auto xs = chain_of(f, br.itinerary, y);
      double r = 0.0, dr = 0.0, dx = 1.0;
      // dx_j/dy = prod_{i >= j} 1 / f'(x_i), accumulated from the end
      for (std::size_t j = xs.size(); j-- > 0;) {
        const double t = tau.value(xs[j]);
        dx /= branch(f, br.itinerary[j]).derivative(xs[j]);
        r += t;
        dr += tau.derivative(xs[j]) * dx;
        roof.inf_tau = std::min(roof.inf_tau, t);
        k_by_r[br.R] = std::max(k_by_r[br.R], t + br.R * b_log_sigma);
      }
      rb.sup_r = std::max(rb.sup_r, r);
      rb.inf_r = std::min(rb.inf_r, r);
      rb.sup_dr = std::max(rb.sup_dr, std::abs(dr));
      rb.sup_hprime = std::max(rb.sup_hprime, std::abs(dx));
      if (c % 2 == 1) cell_r.push_back(r);
      if (c % 2 == 0) {
        if (c > 0) cell_mass.push_back(std::abs(xs.front() - prev_x0) / width);
        prev_x0 = xs.front();
      }
    }
    chk.max_roof_derivative = std::max(chk.max_roof_derivative, rb.sup_dr);
    roof.branches.push_back(rb);
  }

  double r_max = 0.0;
  for (double r : cell_r) r_max = std::max(r_max, r);
  for (double t = 0.0; t <= r_max + opt.threshold_step; t += opt.threshold_step) {
    double m = 0.0;
    for (std::size_t i = 0; i < cell_r.size(); ++i) m += cell_r[i] > t ? cell_mass[i] : 0.0;
    roof.thresholds.push_back(t);
    roof.measure.push_back(m);
  }

  // roof bound constant and its growth in R
  std::vector<double> rs, ks;
  for (int n = 1; n <= cap; ++n) {
    if (std::isfinite(k_by_r[n])) {
      rs.push_back(n);
      ks.push_back(k_by_r[n]);
      chk.roof_bound_constant = std::max(chk.roof_bound_constant, k_by_r[n]);
    }
  }
  chk.roof_bound_growth = rs.size() >= 2 ? linear_fit(rs, ks).slope : 0.0;

  // exponential tail sums grouped by return time
  const double pending = std::max(0.0, 1.0 - F.coverage());
  const bool complete = pending <= 1e-15;
  for (double eps : opt.eps) {
    std::vector<double> term(static_cast<std::size_t>(cap) + 1, 0.0);
    for (std::size_t k = 0; k < F.branches().size(); ++k) {
      const auto& rb = roof.branches[k];
      term[F.branches()[k].R] += std::exp(eps * rb.sup_r) * rb.sup_hprime;
    }
    const double total = std::accumulate(term.begin(), term.end(), 0.0);
    bool ok = complete;
    if (!complete) {
      std::vector<double> xs, ys;
      for (int n = cap / 2; n <= cap; ++n) {
        if (term[n] > 0.0) {
          xs.push_back(n);
          ys.push_back(std::log(term[n]));
        }
      }
      if (xs.size() >= 4) {
        const LinearFit lf = linear_fit(xs, ys);
        if (lf.slope < 0.0) {
          const double q = std::exp(lf.slope);
          const double last = std::exp(lf.intercept + lf.slope * cap);
          ok = last * q / (1.0 - q) <= opt.tail_tolerance * total;
        }
      }
    }
    chk.eps.push_back(eps);
    chk.tail_sum.push_back(total);
    chk.convergent.push_back(ok);
    if (ok) chk.largest_convergent_eps = std::max(chk.largest_convergent_eps, eps);
  }

  std::vector<double> n_grid, se_r;
  for (int n = 0; n <= cap; ++n) n_grid.push_back(n);
  se_r.assign(n_grid.size(), F.pruned_mass());
  chk.return_tail = fit_exponential_decay(n_grid, F.tail(), se_r, 0.9, FitMode::Raw);
  std::vector<double> se_t(roof.thresholds.size(), pending);
  chk.roof_tail = fit_exponential_decay(roof.thresholds, roof.measure, se_t, 0.9, FitMode::Raw);

  if (std::none_of(chk.convergent.begin(), chk.convergent.end(), [](bool b) { return b; })) {
    throw Error(ErrorCode::TailCheckFailed, "exponential tail sums diverge for every eps in the grid");
  }
  return res;
}

std::vector<double> induced_periodic_orbit(const InducedMarkovMap& F, const std::vector<int>& word) {
  const int p = static_cast<int>(word.size());
  const int nb = static_cast<int>(F.branches().size());
  if (p == 0) throw Error(ErrorCode::InvalidInput, "empty itinerary");
  for (int w : word) {
    if (w < 0 || w >= nb) throw Error(ErrorCode::InvalidInput, "itinerary symbol out of range");
  }
  auto compose = [&](double y) {
    for (int i = p - 1; i >= 0; --i) y = F.h(word[i], y);
    return y;
  };
  double y = 0.5 * (F.delta_lo() + F.delta_hi());
  double last = INFINITY;
  bool settled = false;
  for (int it = 0; it < 100000; ++it) {
    const double x = compose(y);
    const double diff = std::abs(x - y);
    if (x == y || (diff >= last && diff <= 1e-14 * (1.0 + std::abs(x)))) {
      y = x;
      settled = true;
      break;
    }
    last = diff;
    y = x;
  }
  if (!settled) throw Error(ErrorCode::NotConverged, "inverse-branch iteration cap reached");
  std::vector<double> orbit(p);
  orbit[0] = y;
  double z = y;
  for (int k = p - 1; k >= 1; --k) {
    z = F.h(word[k], z);
    orbit[k] = z;
  }
  return orbit;
}

namespace {

// r_n o h_word (y) with x_{n-1} = h_{w[n-1]}(y), ..., x_0 = h_{w[0]}(x_1)
double birkhoff_along(const InducedMarkovMap& F, const std::function<double(double)>& r, const std::vector<int>& w,
                      double y) {
  double s = 0.0;
  for (std::size_t i = w.size(); i-- > 0;) {
    y = F.h(w[i], y);
    s += r(y);
  }
  return s;
}

// min over the grid of |(r_n o h1 - r_n o h2)'| by Richardson-extrapolated
// central differences
double pair_statistic(const InducedMarkovMap& F, const std::function<double(double)>& r, const std::vector<int>& w1,
                      const std::vector<int>& w2, int grid) {
  const double lo = F.delta_lo(), width = F.delta_hi() - lo;
  const double step = std::min(1e-4, 0.5 * width / grid);
  auto g = [&](double y) { return birkhoff_along(F, r, w1, y) - birkhoff_along(F, r, w2, y); };
  double best = INFINITY;
  for (int k = 0; k < grid; ++k) {
    const double y = lo + width * (k + 0.5) / grid;
    const double d1 = (g(y + step) - g(y - step)) / (2.0 * step);
    const double d2 = (g(y + step / 2) - g(y - step / 2)) / step;
    best = std::min(best, std::abs((4.0 * d2 - d1) / 3.0));
  }
  return best;
}

// Lyndon words of length exactly p over {0..k-1} in lexicographic order (Duval).
std::vector<std::vector<int>> lyndon_words(int k, int p) {
  std::vector<std::vector<int>> out;
  std::vector<int> w{-1};
  while (!w.empty()) {
    ++w.back();
    if (static_cast<int>(w.size()) == p) out.push_back(w);
    const std::size_t m = w.size();
    while (static_cast<int>(w.size()) < p) w.push_back(w[w.size() - m]);
    while (!w.empty() && w.back() == k - 1) w.pop_back();
  }
  return out;
}

std::vector<int> largest_branches(const InducedMarkovMap& F, int count) {
  std::vector<int> idx(F.branches().size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](int a, int b) { return F.branches()[a].length() > F.branches()[b].length(); });
  idx.resize(std::min<std::size_t>(idx.size(), static_cast<std::size_t>(std::max(count, 1))));
  return idx;
}

UniReport derivative_mode(const InducedMarkovMap& F, const std::function<double(double)>& r, const UniOptions& opt) {
  UniReport rep;
  rep.mode = UniMode::Derivative;
  rep.threshold = opt.threshold;
  if (!opt.word1.empty() || !opt.word2.empty()) {
    if (opt.word1.size() != opt.word2.size() || opt.word1 == opt.word2) {
      throw Error(ErrorCode::InvalidInput, "derivative witnesses must be distinct words of equal length");
    }
    rep.n0 = static_cast<int>(opt.word1.size());
    rep.word1 = opt.word1;
    rep.word2 = opt.word2;
    rep.statistic = pair_statistic(F, r, opt.word1, opt.word2, opt.grid);
    rep.level_statistic = {rep.statistic};
    rep.pairs_tested = 1;
    rep.witness_found = true;
    rep.holds = rep.statistic >= opt.threshold;
    return rep;
  }
  if (opt.n0 < 1) throw Error(ErrorCode::InvalidInput, "n0 must be positive");
  const auto alphabet = largest_branches(F, opt.alphabet);
  const int K = static_cast<int>(alphabet.size());
  if (K < 2) {
    rep.n0 = opt.n0;
    return rep;  // a single branch offers no pair
  }
  rep.n0 = opt.n0;
  for (int n = 1; n <= opt.n0; ++n) {
    int m = 0;
    std::size_t count = 1;
    while (m < n && count * K <= opt.max_candidates) {
      count *= K;
      ++m;
    }
    const std::vector<int> base(n, alphabet[0]);
    double best = -1.0;
    std::vector<int> best_w;
    std::vector<int> digits(m, 0);
    for (std::size_t c = 0; c < count; ++c) {
      std::vector<int> w(base.begin(), base.begin() + (n - m));
      for (int d : digits) w.push_back(alphabet[d]);
      if (w != base) {
        const double s = pair_statistic(F, r, base, w, opt.grid);
        ++rep.pairs_tested;
        if (s > best) {
          best = s;
          best_w = w;
        }
      }
      for (int i = m - 1; i >= 0; --i) {
        if (++digits[i] < K) break;
        digits[i] = 0;
      }
    }
    rep.level_statistic.push_back(std::max(best, 0.0));
    if (n == opt.n0) {
      rep.word1 = base;
      rep.word2 = best_w;
      rep.statistic = std::max(best, 0.0);
    }
  }
  // fitted over the upper half of the levels; the first levels can sit on
  // an isolated zero of the difference
  std::vector<double> xs, ys;
  for (std::size_t i = rep.level_statistic.size() / 2; i < rep.level_statistic.size(); ++i) {
    if (rep.level_statistic[i] > 0.0) {
      xs.push_back(static_cast<double>(i + 1));
      ys.push_back(std::log(rep.level_statistic[i]));
    }
  }
  rep.level_decay = xs.size() >= 2 ? linear_fit(xs, ys).slope : 0.0;
  rep.witness_found = true;
  rep.holds = rep.statistic >= opt.threshold;
  return rep;
}

UniReport periodic_mode(const InducedMarkovMap& F, const std::function<double(double)>& r, const UniOptions& opt) {
  UniReport rep;
  rep.mode = UniMode::Periodic;
  rep.threshold = opt.periodic_tolerance;
  auto evaluate = [&](const std::vector<int>& w1, const std::vector<int>& w2) {
    const auto o1 = induced_periodic_orbit(F, w1), o2 = induced_periodic_orbit(F, w2);
    double s1 = 0.0, s2 = 0.0;
    for (double x : o1) s1 += r(x);
    for (double x : o2) s2 += r(x);
    ++rep.pairs_tested;
    const double gap = std::abs(s1 - s2);
    const bool distinct = gap > opt.periodic_tolerance * (1.0 + std::max(std::abs(s1), std::abs(s2)));
    if (!rep.witness_found || (distinct && !rep.holds) || (!rep.holds && gap > rep.statistic)) {
      rep.witness_found = true;
      rep.holds = distinct;
      rep.statistic = gap;
      rep.word1 = w1;
      rep.word2 = w2;
      rep.orbit1 = o1;
      rep.orbit2 = o2;
      rep.sum1 = s1;
      rep.sum2 = s2;
      rep.n0 = static_cast<int>(w1.size());
    }
    return distinct;
  };
  if (!opt.word1.empty() || !opt.word2.empty()) {
    if (opt.word1.size() != opt.word2.size()) throw Error(ErrorCode::InvalidInput, "periodic witnesses differ in period");
    auto c1 = opt.word1, c2 = opt.word2;
    std::sort(c1.begin(), c1.end());
    std::sort(c2.begin(), c2.end());
    if (c1 != c2) throw Error(ErrorCode::InvalidInput, "periodic witnesses visit branches with different multiplicities");
    evaluate(opt.word1, opt.word2);
    return rep;
  }
  const auto alphabet = largest_branches(F, opt.alphabet);
  const int K = static_cast<int>(alphabet.size());
  for (int p = 2; p <= opt.max_period; ++p) {
    std::map<std::vector<int>, std::vector<std::vector<int>>> groups;
    for (auto& w : lyndon_words(K, p)) {
      std::vector<int> counts(K, 0);
      for (int d : w) ++counts[d];
      for (int& d : w) d = alphabet[d];
      groups[counts].push_back(std::move(w));
    }
    // pairs in lexicographic order of (first word, second word)
    std::vector<std::pair<std::vector<int>, std::vector<int>>> pairs;
    for (auto& [counts, words] : groups) {
      for (std::size_t i = 0; i < words.size(); ++i) {
        for (std::size_t j = i + 1; j < words.size(); ++j) pairs.emplace_back(words[i], words[j]);
      }
    }
    std::sort(pairs.begin(), pairs.end());
    for (const auto& [a, b] : pairs) {
      if (evaluate(a, b)) return rep;
    }
  }
  return rep;
}

}  // namespace

UniReport uni_test(const InducedMarkovMap& F, const std::function<double(double)>& r, const UniOptions& options) {
  if (F.branches().empty()) throw Error(ErrorCode::InvalidInput, "induced map has no branches");
  return options.mode == UniMode::Derivative ? derivative_mode(F, r, options) : periodic_mode(F, r, options);
}

}  // namespace singmix
