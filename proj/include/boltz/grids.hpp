#ifndef BOLTZ_GRIDS_HPP
#define BOLTZ_GRIDS_HPP

#include "potential.hpp"

namespace boltz {

// Tensor grid on [-vmax, vmax]^d, node 0 at -vmax, trapezoid weights.
class VelocityGrid {
 public:
  VelocityGrid() = default;
  VelocityGrid(int d, double vmax, int n) : d_(d), n_(n), vmax_(vmax) {
    require(d >= 1 && d <= 3, "velocity dimension must be 1..3");
    require(n >= 3, "nodes_per_axis must be >= 3");
    require(std::isfinite(vmax) && vmax > 0.0, "V_max must be positive");
    h_ = 2.0 * vmax / (n - 1);
    N_ = 1;
    for (int k = 0; k < d; ++k) N_ *= n;
    axis_.resize(n);
    axis_w_.assign(n, h_);
    for (int i = 0; i < n; ++i) axis_[i] = -vmax + i * h_;
    axis_[n - 1] = vmax;
    if ((n & 1) == 1) axis_[n / 2] = 0.0;
    axis_w_[0] = axis_w_[n - 1] = 0.5 * h_;
    v_.resize(static_cast<std::size_t>(N_) * d);
    w_.resize(N_);
    v2_.resize(N_);
    for (int i = 0; i < N_; ++i) {
      int r = i;
      double w = 1.0, s = 0.0;
      for (int k = d - 1; k >= 0; --k) {
        int ik = r % n;
        r /= n;
        v_[static_cast<std::size_t>(i) * d + k] = axis_[ik];
        w *= axis_w_[ik];
        s += axis_[ik] * axis_[ik];
      }
      w_[i] = w;
      v2_[i] = s;
    }
  }

  int dim() const { return d_; }
  int n() const { return n_; }
  int size() const { return N_; }
  double vmax() const { return vmax_; }
  double h() const { return h_; }
  const Vec& axis() const { return axis_; }
  const Vec& weights() const { return w_; }
  double weight(int i) const { return w_[i]; }
  const double* v(int i) const { return v_.data() + static_cast<std::size_t>(i) * d_; }
  double v2(int i) const { return v2_[i]; }
  double coord(int i, int k) const { return v_[static_cast<std::size_t>(i) * d_ + k]; }

  // row-major, last axis fastest
  int stride(int k) const {
    int s = 1;
    for (int j = d_ - 1; j > k; --j) s *= n_;
    return s;
  }
  int index(const int* m) const {
    int r = 0;
    for (int k = 0; k < d_; ++k) r = r * n_ + m[k];
    return r;
  }
  void multi(int i, int* m) const {
    for (int k = d_ - 1; k >= 0; --k) {
      m[k] = i % n_;
      i /= n_;
    }
  }

  // exp(-|v|^2/4) and exp(-|v|^2/2), evaluated from the exponent
  Vec sqrt_mu() const {
    Vec r(N_);
    for (int i = 0; i < N_; ++i) r[i] = std::exp(-0.25 * v2_[i]);
    return r;
  }
  Vec mu() const {
    Vec r(N_);
    for (int i = 0; i < N_; ++i) r[i] = std::exp(-0.5 * v2_[i]);
    return r;
  }

  double integrate(const Vec& f) const {
    double s = 0.0;
    for (int i = 0; i < N_; ++i) s += w_[i] * f[i];
    return s;
  }
  double inner(const double* f, const double* g) const {
    double s = 0.0;
    for (int i = 0; i < N_; ++i) s += w_[i] * f[i] * g[i];
    return s;
  }

  std::string describe() const {
    return "d=" + std::to_string(d_) + " n=" + std::to_string(n_) + " vmax=" + fmt(vmax_);
  }

 private:
  int d_ = 0, n_ = 0, N_ = 0;
  double vmax_ = 0.0, h_ = 0.0;
  Vec axis_, axis_w_, v_, w_, v2_;
};

// Uniform periodic grid; the trapezoid rule on a torus is the plain mean.
class SpatialGrid {
 public:
  SpatialGrid() = default;
  SpatialGrid(Torus torus, std::vector<int> counts) : torus_(std::move(torus)), counts_(std::move(counts)) {
    require(static_cast<int>(counts_.size()) == torus_.d, "spatial grid needs one count per axis");
    N_ = 1;
    for (int c : counts_) {
      require(c >= 1, "spatial counts must be positive");
      N_ *= c;
    }
    weight_ = torus_.volume() / N_;
  }

  const Torus& torus() const { return torus_; }
  int dim() const { return torus_.d; }
  int size() const { return N_; }
  const std::vector<int>& counts() const { return counts_; }
  double weight() const { return weight_; }
  double dx(int k) const { return torus_.period[k] / counts_[k]; }

  void point(int i, double* x) const {
    for (int k = torus_.d - 1; k >= 0; --k) {
      int ik = i % counts_[k];
      i /= counts_[k];
      x[k] = ik * dx(k);
    }
  }
  Vec point(int i) const {
    Vec x(torus_.d);
    point(i, x.data());
    return x;
  }
  int index(const int* m) const {
    int r = 0;
    for (int k = 0; k < torus_.d; ++k) r = r * counts_[k] + m[k];
    return r;
  }

 private:
  Torus torus_;
  std::vector<int> counts_;
  int N_ = 0;
  double weight_ = 0.0;
};

}  // namespace boltz

#endif  // BOLTZ_GRIDS_HPP
