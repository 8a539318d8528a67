#pragma once

// Truncated multivariate Taylor arithmetic.
//
// A jet stores the Taylor coefficients c_e = f^{(e)}(p) / e! of a function at a
// base point p for all exponents e in a downward-closed index set.  The index
// set is described by a JetLayout: variables are partitioned into groups and
// each group carries its own cap on total degree.  A single-group layout is
// the usual "total order J" jet; multi-group layouts are used when some
// variables (e.g. covector components) must be carried as exact polynomials
// while others are truncated.
//
// Every retained coefficient of a sum, product, or composition is exact:
// truncation only ever drops coefficients, never perturbs the kept ones.

#include <algorithm>
#include <cmath>
#include <complex>
#include <mutex>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

namespace pdo {

using cplx = std::complex<double>;
using MultiIndex = std::vector<int>;

int degree(const MultiIndex& e);
double factorial(int n);
double multi_factorial(const MultiIndex& e);
/// All multi-indices of `n` variables with |e| == q, lexicographically descending.
std::vector<MultiIndex> multi_indices_of_degree(int n, int q);
/// All multi-indices of `n` variables with |e| <= q, graded.
std::vector<MultiIndex> multi_indices_up_to(int n, int q);

class JetLayout {
 public:
  struct Product {
    std::uint32_t a, b, out;
  };

  /// Variables are numbered group by group: group 0 owns the first
  /// group_sizes[0] variables, and so on.
  static std::shared_ptr<const JetLayout> make(std::vector<int> group_sizes, std::vector<int> caps);
  static std::shared_ptr<const JetLayout> dense(int nvars, int order) { return make({nvars}, {order}); }

  int nvars() const { return nvars_; }
  int ngroups() const { return static_cast<int>(caps_.size()); }
  int group_of(int var) const { return group_of_var_[var]; }
  int group_size(int g) const { return group_sizes_[g]; }
  int cap(int g) const { return caps_[g]; }
  const std::vector<int>& caps() const { return caps_; }
  const std::vector<int>& group_sizes() const { return group_sizes_; }
  /// Sum of the group caps; the largest total degree present.
  int max_degree() const;

  std::size_t size() const { return exps_.size(); }
  const MultiIndex& exponent(std::size_t i) const { return exps_[i]; }
  std::optional<std::size_t> find(const MultiIndex& e) const;
  bool contains(const MultiIndex& e) const { return find(e).has_value(); }
  const std::vector<Product>& products() const;

  /// Layout with the cap of `var`'s group lowered by `by` (clamped at 0).
  std::shared_ptr<const JetLayout> lowered(int var, int by = 1) const;

  bool same_as(const JetLayout& other) const { return this == &other; }

  JetLayout(std::vector<int> group_sizes, std::vector<int> caps);

 private:
  std::uint64_t encode(const MultiIndex& e) const;

  int nvars_ = 0;
  std::vector<int> group_sizes_;
  std::vector<int> caps_;
  std::vector<int> group_of_var_;
  std::vector<MultiIndex> exps_;
  std::vector<std::pair<std::uint64_t, std::uint32_t>> lookup_;  // sorted by key
  mutable std::once_flag products_once_;
  mutable std::vector<Product> products_;
};

using LayoutPtr = std::shared_ptr<const JetLayout>;

template <class T>
class Jet {
 public:
  Jet() = default;
  explicit Jet(LayoutPtr layout) : layout_(std::move(layout)), c_(layout_->size(), T{}) {}

  static Jet constant(LayoutPtr layout, T value) {
    Jet j(std::move(layout));
    j.c_[0] = value;
    return j;
  }
  /// The coordinate function p_v + h_v.
  static Jet variable(LayoutPtr layout, int v, T value) {
    Jet j(std::move(layout));
    j.c_[0] = value;
    MultiIndex e(j.layout_->nvars(), 0);
    e[v] = 1;
    if (auto idx = j.layout_->find(e)) j.c_[*idx] = T(1);
    return j;
  }

  const LayoutPtr& layout() const { return layout_; }
  std::size_t size() const { return c_.size(); }
  T value() const { return c_[0]; }
  T& operator[](std::size_t i) { return c_[i]; }
  const T& operator[](std::size_t i) const { return c_[i]; }
  std::span<const T> coeffs() const { return c_; }

  /// Taylor coefficient f^{(e)}/e!; zero if e is outside the layout.
  T coeff(const MultiIndex& e) const {
    auto idx = layout_->find(e);
    return idx ? c_[*idx] : T{};
  }
  /// Partial derivative f^{(e)}(p).
  T derivative(const MultiIndex& e) const { return coeff(e) * T(multi_factorial(e)); }

  Jet& operator+=(const Jet& o) {
    check(o);
    for (std::size_t i = 0; i < c_.size(); ++i) c_[i] += o.c_[i];
    return *this;
  }
  Jet& operator-=(const Jet& o) {
    check(o);
    for (std::size_t i = 0; i < c_.size(); ++i) c_[i] -= o.c_[i];
    return *this;
  }
  Jet& operator*=(T s) {
    for (auto& v : c_) v *= s;
    return *this;
  }
  Jet& operator+=(T s) {
    c_[0] += s;
    return *this;
  }
  Jet operator-() const {
    Jet r = *this;
    for (auto& v : r.c_) v = -v;
    return r;
  }
  friend Jet operator+(Jet a, const Jet& b) { return a += b; }
  friend Jet operator-(Jet a, const Jet& b) { return a -= b; }
  friend Jet operator*(Jet a, T s) { return a *= s; }
  friend Jet operator*(T s, Jet a) { return a *= s; }
  friend Jet operator+(Jet a, T s) { return a += s; }
  friend Jet operator-(Jet a, T s) { return a += -s; }

  friend Jet operator*(const Jet& a, const Jet& b) {
    a.check(b);
    Jet r(a.layout_);
    for (const auto& p : a.layout_->products()) r.c_[p.out] += a.c_[p.a] * b.c_[p.b];
    return r;
  }
  Jet& operator*=(const Jet& o) { return *this = *this * o; }

  /// f(p + h) for a scalar function with derivatives f^{(k)}(value()), k = 0..
  /// `derivs` may be shorter than needed; missing derivatives count as zero.
  Jet compose(std::span<const T> derivs) const {
    const int kmax = std::min<int>(static_cast<int>(derivs.size()) - 1, layout_->max_degree());
    Jet h = *this;
    h.c_[0] = T{};
    Jet r = constant(layout_, derivs[kmax] / T(factorial(kmax)));
    for (int k = kmax - 1; k >= 0; --k) {
      r = r * h;
      r.c_[0] += derivs[k] / T(factorial(k));
    }
    return r;
  }

  Jet diff(int v) const {
    LayoutPtr out = layout_->lowered(v);
    Jet r(out);
    MultiIndex e;
    for (std::size_t i = 0; i < out->size(); ++i) {
      e = out->exponent(i);
      e[v] += 1;
      if (auto src = layout_->find(e)) r.c_[i] = c_[*src] * T(e[v]);
    }
    return r;
  }
  Jet diff(const MultiIndex& alpha) const {
    Jet r = *this;
    for (int v = 0; v < static_cast<int>(alpha.size()); ++v)
      for (int k = 0; k < alpha[v]; ++k) r = r.diff(v);
    return r;
  }

  /// Copy into `target`, mapping source variable v to target variable map[v].
  /// Coefficients with no image in `target` are dropped.
  Jet embed(LayoutPtr target, const std::vector<int>& map) const {
    Jet r(target);
    MultiIndex e(target->nvars(), 0);
    for (std::size_t i = 0; i < c_.size(); ++i) {
      std::fill(e.begin(), e.end(), 0);
      const auto& s = layout_->exponent(i);
      for (std::size_t v = 0; v < s.size(); ++v) e[map[v]] += s[v];
      if (auto idx = target->find(e)) r.c_[*idx] += c_[i];
    }
    return r;
  }
  /// Restrict to a layout over the same variables (drops missing coefficients).
  Jet restrict_to(LayoutPtr target) const {
    std::vector<int> id(layout_->nvars());
    for (int v = 0; v < layout_->nvars(); ++v) id[v] = v;
    return embed(std::move(target), id);
  }

  /// Polynomial value at displacement h.
  T eval(std::span<const double> h) const {
    T acc{};
    for (std::size_t i = 0; i < c_.size(); ++i) {
      const auto& e = layout_->exponent(i);
      double m = 1.0;
      for (std::size_t v = 0; v < e.size(); ++v)
        for (int k = 0; k < e[v]; ++k) m *= h[v];
      acc += c_[i] * T(m);
    }
    return acc;
  }

  double max_abs() const {
    double m = 0.0;
    for (const auto& v : c_) m = std::max(m, std::abs(v));
    return m;
  }

 private:
  void check(const Jet& o) const {
    if (layout_.get() != o.layout_.get()) throw std::invalid_argument("jet layout mismatch");
  }

  LayoutPtr layout_;
  std::vector<T> c_;
};

using RJet = Jet<double>;
using CJet = Jet<cplx>;

CJet complexify(const RJet& j);
RJet real_part(const CJet& j);
CJet conj(const CJet& j);

/// Substitute shifts h_v(·) (jets with zero constant term, all sharing one
/// layout) into the polynomial `f`: returns Σ_e c_e Π_v h_v^{e_v}.
template <class T>
Jet<T> substitute(const Jet<T>& f, const std::vector<Jet<T>>& shifts);

template <class T>
Jet<T> reciprocal(const Jet<T>& a);
template <class T>
Jet<T> sqrt(const Jet<T>& a);
template <class T>
Jet<T> exp(const Jet<T>& a);
template <class T>
Jet<T> log(const Jet<T>& a);
template <class T>
Jet<T> pow(const Jet<T>& a, double p);
template <class T>
Jet<T> sin(const Jet<T>& a);
template <class T>
Jet<T> cos(const Jet<T>& a);

template <class T>
Jet<T> operator/(const Jet<T>& a, const Jet<T>& b) {
  return a * reciprocal(b);
}

}  // namespace pdo
