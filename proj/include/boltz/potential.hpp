#ifndef BOLTZ_POTENTIAL_HPP
#define BOLTZ_POTENTIAL_HPP

#include <Eigen/Dense>

#include <fstream>
#include <sstream>

#include "common.hpp"

namespace boltz {

struct Torus {
  int d = 1;
  Vec period{1.0};

  Torus() = default;
  explicit Torus(int dim, double p = 1.0) : d(dim), period(dim, p) { validate(); }
  Torus(int dim, Vec periods) : d(dim), period(std::move(periods)) { validate(); }

  void validate() const {
    require(d >= 1, "torus dimension must be >= 1");
    require(static_cast<int>(period.size()) == d, "period count must equal dimension");
    for (double p : period) require(std::isfinite(p) && p > 0.0, "periods must be positive");
  }

  double wrap(double x, int axis) const {
    double L = period[axis];
    double y = x - L * std::floor(x / L);
    if (y >= L) y -= L;  // x slightly below a multiple of L
    if (y < 0.0) y = 0.0;
    return y;
  }
  void wrap(double* x) const {
    for (int i = 0; i < d; ++i) x[i] = wrap(x[i], i);
  }
  double volume() const {
    double v = 1.0;
    for (double p : period) v *= p;
    return v;
  }
};

struct FourierTerm {
  std::vector<int> k;
  double amplitude = 0.0;
  double phase = 0.0;
};

// Phi(x) = offset + sum_j a_j cos(2 pi sum_i k_ji x_i / L_i + phase_j)
class PotentialField {
 public:
  PotentialField() : PotentialField(Torus(1), 1.0, {}) {}
  PotentialField(Torus torus, double offset, std::vector<FourierTerm> terms, bool check_lower_bound = true)
      : torus_(std::move(torus)), offset_(offset), terms_(std::move(terms)) {
    torus_.validate();
    require(std::isfinite(offset_), "offset must be finite");
    double amp = 0.0;
    for (const auto& t : terms_) {
      require(static_cast<int>(t.k.size()) == torus_.d, "frequency multi-index length must equal dimension");
      require(std::isfinite(t.amplitude) && std::isfinite(t.phase), "non-finite Fourier coefficient");
      amp += std::abs(t.amplitude);
      Vec kappa(torus_.d);
      for (int i = 0; i < torus_.d; ++i) kappa[i] = 2.0 * kPi * t.k[i] / torus_.period[i];
      kappa_.push_back(std::move(kappa));
    }
    amp_sum_ = amp;
    if (check_lower_bound)
      require(offset_ - amp >= 1.0, "potential violates 1 <= Phi: offset - sum|a| = " + fmt(offset_ - amp));
    hess_bound_ = 0.0;
    for (std::size_t j = 0; j < terms_.size(); ++j)
      hess_bound_ += std::abs(terms_[j].amplitude) * dot(kappa_[j], kappa_[j]);
    sampled_sup_ = sample_sup();
  }

  static PotentialField constant(int d, double value, bool check_lower_bound = true) {
    return PotentialField(Torus(d), value, {}, check_lower_bound);
  }
  // 2 + cos(2 pi x_axis) style single-mode potential
  static PotentialField cosine(int d, int axis, double offset = 2.0, double amplitude = 1.0) {
    FourierTerm t;
    t.k.assign(d, 0);
    t.k[axis] = 1;
    t.amplitude = amplitude;
    return PotentialField(Torus(d), offset, {t});
  }

  const Torus& torus() const { return torus_; }
  int dim() const { return torus_.d; }
  double offset() const { return offset_; }
  const std::vector<FourierTerm>& terms() const { return terms_; }

  // certified: offset + sum |a|
  double sup_norm() const { return std::abs(offset_) + amp_sum_; }
  double sampled_sup() const { return sampled_sup_; }
  double lower_bound() const { return offset_ - amp_sum_; }
  // bound on the spectral norm of the Hessian
  double hessian_bound() const { return hess_bound_; }

  double value(const double* xin) const {
    double x[16];
    wrapped(xin, x);
    double phi = offset_;
    for (std::size_t j = 0; j < terms_.size(); ++j) phi += terms_[j].amplitude * std::cos(theta(j, x));
    return phi;
  }

  void gradient(const double* xin, double* grad) const {
    double x[16];
    wrapped(xin, x);
    const int d = torus_.d;
    std::fill(grad, grad + d, 0.0);
    for (std::size_t j = 0; j < terms_.size(); ++j) {
      double s = -terms_[j].amplitude * std::sin(theta(j, x));
      for (int i = 0; i < d; ++i) grad[i] += s * kappa_[j][i];
    }
  }

  // hess may be null
  void eval(const double* xin, double& phi, double* grad, double* hess) const {
    double x[16];
    wrapped(xin, x);
    const int d = torus_.d;
    phi = offset_;
    std::fill(grad, grad + d, 0.0);
    if (hess) std::fill(hess, hess + d * d, 0.0);
    for (std::size_t j = 0; j < terms_.size(); ++j) {
      const double th = theta(j, x);
      const double a = terms_[j].amplitude;
      const double c = std::cos(th), s = std::sin(th);
      phi += a * c;
      const Vec& kap = kappa_[j];
      for (int i = 0; i < d; ++i) grad[i] -= a * s * kap[i];
      if (hess)
        for (int i = 0; i < d; ++i)
          for (int l = i; l < d; ++l) {
            double h = -a * c * kap[i] * kap[l];
            hess[i * d + l] += h;
            if (l != i) hess[l * d + i] += h;
          }
    }
  }

  bool operator==(const PotentialField& o) const {
    if (torus_.d != o.torus_.d || torus_.period != o.torus_.period || offset_ != o.offset_ ||
        terms_.size() != o.terms_.size())
      return false;
    for (std::size_t j = 0; j < terms_.size(); ++j)
      if (terms_[j].k != o.terms_[j].k || terms_[j].amplitude != o.terms_[j].amplitude ||
          terms_[j].phase != o.terms_[j].phase)
        return false;
    return true;
  }

 private:
  void wrapped(const double* xin, double* x) const {
    require(torus_.d <= 16, "dimension > 16 unsupported");
    for (int i = 0; i < torus_.d; ++i) {
      require(std::isfinite(xin[i]), "non-finite coordinate");
      x[i] = torus_.wrap(xin[i], i);
    }
  }
  double theta(std::size_t j, const double* x) const {
    return dot(kappa_[j].data(), x, torus_.d) + terms_[j].phase;
  }

  double sample_sup() const {
    if (terms_.empty()) return std::abs(offset_);
    const int d = torus_.d;
    double best = 0.0;
    Vec x(d);
    if (d <= 3) {
      const int n = 64;
      std::size_t total = 1;
      for (int i = 0; i < d; ++i) total *= n;
      for (std::size_t idx = 0; idx < total; ++idx) {
        std::size_t r = idx;
        for (int i = 0; i < d; ++i) {
          x[i] = torus_.period[i] * static_cast<double>(r % n) / n;
          r /= n;
        }
        best = std::max(best, std::abs(value(x.data())));
      }
    } else {
      for (std::uint64_t k = 1; k <= 100000; ++k) {
        Vec p = halton(k, d);
        for (int i = 0; i < d; ++i) x[i] = p[i] * torus_.period[i];
        best = std::max(best, std::abs(value(x.data())));
      }
    }
    return best;
  }

  Torus torus_;
  double offset_;
  std::vector<FourierTerm> terms_;
  std::vector<Vec> kappa_;
  double amp_sum_ = 0.0;
  double hess_bound_ = 0.0;
  double sampled_sup_ = 0.0;
};

struct PotentialEval {
  double phi = 0.0;
  Vec grad;
  Vec hess;  // row-major d x d
};

inline PotentialEval eval_potential(const PotentialField& field, const Vec& x) {
  require(static_cast<int>(x.size()) == field.dim(), "point dimension mismatch");
  PotentialEval e;
  e.grad.resize(field.dim());
  e.hess.resize(field.dim() * field.dim());
  field.eval(x.data(), e.phi, e.grad.data(), e.hess.data());
  return e;
}

struct DegenerateSubspace {
  std::vector<Vec> basis;
  int n = 0;
  Vec singular_values;
  double rank_tol = 1e-8;
  double max_grad = 0.0;
};

inline DegenerateSubspace degenerate_subspace(const PotentialField& field, int samples, double rank_tol = 1e-8) {
  const int d = field.dim();
  require(samples >= 1, "samples must be positive");
  Eigen::MatrixXd G(samples, d);
  double gmax = 0.0;
  Vec x(d), g(d);
  for (int s = 0; s < samples; ++s) {
    Vec p = halton(static_cast<std::uint64_t>(s) + 1, d);
    for (int i = 0; i < d; ++i) x[i] = p[i] * field.torus().period[i];
    field.gradient(x.data(), g.data());
    double gn = 0.0;
    for (int i = 0; i < d; ++i) {
      G(s, i) = g[i];
      gn += g[i] * g[i];
    }
    gmax = std::max(gmax, std::sqrt(gn));
  }
  DegenerateSubspace out;
  out.rank_tol = rank_tol;
  out.max_grad = gmax;
  Eigen::BDCSVD<Eigen::MatrixXd> svd(G, Eigen::ComputeFullV);
  Eigen::VectorXd sv = svd.singularValues();
  out.singular_values.assign(d, 0.0);
  for (int i = 0; i < sv.size(); ++i) out.singular_values[i] = sv(i);
  const double smax = out.singular_values[0];
  std::vector<int> null_cols;
  if (smax == 0.0) {
    for (int i = 0; i < d; ++i) null_cols.push_back(i);
  } else {
    const double thr = rank_tol * smax;
    for (int i = 0; i < d; ++i) {
      double s = out.singular_values[i];
      if (s > thr / 10.0 && s < thr * 10.0)
        throw Error(ErrorKind::DegenerateRankAmbiguous,
                    "singular value " + fmt(s) + " within a factor 10 of threshold " + fmt(thr));
      if (s <= thr) null_cols.push_back(i);
    }
  }
  out.n = static_cast<int>(null_cols.size());
  if (smax == 0.0) {
    for (int i = 0; i < d; ++i) {
      Vec e(d, 0.0);
      e[i] = 1.0;
      out.basis.push_back(e);
    }
    return out;
  }
  Eigen::MatrixXd V = svd.matrixV();
  Eigen::MatrixXd B(d, out.n);
  for (int c = 0; c < out.n; ++c) B.col(c) = V.col(null_cols[c]);
  // prefer coordinate axes when the span is axis-aligned
  Eigen::MatrixXd P = B * B.transpose();
  std::vector<int> axes;
  for (int i = 0; i < d; ++i) {
    Eigen::VectorXd e = Eigen::VectorXd::Unit(d, i);
    if ((P * e - e).norm() < 1e-10) axes.push_back(i);
  }
  if (static_cast<int>(axes.size()) == out.n) {
    for (int i : axes) {
      Vec e(d, 0.0);
      e[i] = 1.0;
      out.basis.push_back(e);
    }
  } else {
    for (int c = 0; c < out.n; ++c) out.basis.emplace_back(B.col(c).data(), B.col(c).data() + d);
  }
  return out;
}

// ---- declarative spec file ----
//   dimension = 2
//   period = 1 1
//   offset = 2
//   term = 0 1 ; 1 [; phase]

inline std::string to_spec_text(const PotentialField& f) {
  std::ostringstream os;
  os << "dimension = " << f.dim() << "\n";
  os << "period =";
  for (double p : f.torus().period) os << ' ' << fmt(p);
  os << "\n";
  os << "offset = " << fmt(f.offset()) << "\n";
  for (const auto& t : f.terms()) {
    os << "term =";
    for (int k : t.k) os << ' ' << k;
    os << " ; " << fmt(t.amplitude);
    if (t.phase != 0.0) os << " ; " << fmt(t.phase);
    os << "\n";
  }
  return os.str();
}

inline std::vector<std::string> split_ws(const std::string& s) {
  std::istringstream is(s);
  std::vector<std::string> out;
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

inline std::string trim(std::string s) {
  auto ns = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), ns));
  s.erase(std::find_if(s.rbegin(), s.rend(), ns).base(), s.end());
  return s;
}

inline PotentialField parse_spec_text(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  int d = -1;
  Vec period;
  double offset = 0.0;
  bool have_offset = false;
  std::vector<FourierTerm> terms;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) throw Error(ErrorKind::Parse, "line " + std::to_string(lineno) + ": expected key = value");
    std::string key = trim(line.substr(0, eq)), val = trim(line.substr(eq + 1));
    if (key == "dimension") {
      d = static_cast<int>(parse_long(val));
    } else if (key == "period") {
      period.clear();
      for (auto& tok : split_ws(val)) period.push_back(parse_double(tok));
    } else if (key == "offset") {
      offset = parse_double(val);
      have_offset = true;
    } else if (key == "term") {
      std::vector<std::string> parts;
      std::string cur;
      std::istringstream ps(val);
      while (std::getline(ps, cur, ';')) parts.push_back(trim(cur));
      if (parts.size() < 2 || parts.size() > 3)
        throw Error(ErrorKind::Parse, "line " + std::to_string(lineno) + ": term = k... ; amplitude [; phase]");
      FourierTerm t;
      for (auto& tok : split_ws(parts[0])) t.k.push_back(static_cast<int>(parse_long(tok)));
      t.amplitude = parse_double(parts[1]);
      if (parts.size() == 3) t.phase = parse_double(parts[2]);
      terms.push_back(std::move(t));
    } else {
      throw Error(ErrorKind::Parse, "line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    }
  }
  if (d < 1) throw Error(ErrorKind::Parse, "missing or invalid dimension");
  if (!have_offset) throw Error(ErrorKind::Parse, "missing offset");
  if (period.empty()) period.assign(d, 1.0);
  if (static_cast<int>(period.size()) != d) throw Error(ErrorKind::Parse, "period count must equal dimension");
  for (auto& t : terms)
    if (static_cast<int>(t.k.size()) != d) throw Error(ErrorKind::Parse, "term index length must equal dimension");
  return PotentialField(Torus(d, period), offset, std::move(terms));
}

inline PotentialField load_potential(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open potential file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_spec_text(ss.str());
}

inline std::string spec_hash(const PotentialField& f) { return Fnv1a().str(to_spec_text(f)).hex(); }

}  // namespace boltz

#endif  // BOLTZ_POTENTIAL_HPP
