#include "pdo/jet.hpp"

#include <map>
#include <numeric>

namespace pdo {

int degree(const MultiIndex& e) { return std::accumulate(e.begin(), e.end(), 0); }

double factorial(int n) {
  double r = 1.0;
  for (int k = 2; k <= n; ++k) r *= k;
  return r;
}

double multi_factorial(const MultiIndex& e) {
  double r = 1.0;
  for (int k : e) r *= factorial(k);
  return r;
}

std::vector<MultiIndex> multi_indices_of_degree(int n, int q) {
  std::vector<MultiIndex> out;
  if (n == 0) {
    if (q == 0) out.emplace_back();
    return out;
  }
  MultiIndex e(n, 0);
  // Recursive fill: first component runs from q down to 0.
  auto rec = [&](auto&& self, int pos, int left) -> void {
    if (pos == n - 1) {
      e[pos] = left;
      out.push_back(e);
      return;
    }
    for (int k = left; k >= 0; --k) {
      e[pos] = k;
      self(self, pos + 1, left - k);
    }
  };
  rec(rec, 0, q);
  return out;
}

std::vector<MultiIndex> multi_indices_up_to(int n, int q) {
  std::vector<MultiIndex> out;
  for (int d = 0; d <= q; ++d) {
    auto level = multi_indices_of_degree(n, d);
    out.insert(out.end(), level.begin(), level.end());
  }
  return out;
}

namespace {
constexpr int kBits = 6;  // per-variable exponent field; caps stay far below 64
}

JetLayout::JetLayout(std::vector<int> group_sizes, std::vector<int> caps)
    : group_sizes_(std::move(group_sizes)), caps_(std::move(caps)) {
  if (group_sizes_.size() != caps_.size()) throw std::invalid_argument("JetLayout: groups/caps mismatch");
  for (std::size_t g = 0; g < group_sizes_.size(); ++g) {
    for (int k = 0; k < group_sizes_[g]; ++k) group_of_var_.push_back(static_cast<int>(g));
    nvars_ += group_sizes_[g];
    if (caps_[g] < 0) caps_[g] = 0;
  }
  if (nvars_ * kBits > 64) throw std::invalid_argument("JetLayout: too many variables");

  // Cartesian product of per-group index sets, ordered by total degree.
  std::vector<std::vector<MultiIndex>> per_group;
  for (std::size_t g = 0; g < group_sizes_.size(); ++g)
    per_group.push_back(multi_indices_up_to(group_sizes_[g], caps_[g]));
  std::vector<MultiIndex> all{MultiIndex{}};
  for (const auto& part : per_group) {
    std::vector<MultiIndex> next;
    next.reserve(all.size() * part.size());
    for (const auto& a : all)
      for (const auto& b : part) {
        MultiIndex e = a;
        e.insert(e.end(), b.begin(), b.end());
        next.push_back(std::move(e));
      }
    all = std::move(next);
  }
  std::stable_sort(all.begin(), all.end(),
                   [](const MultiIndex& a, const MultiIndex& b) { return degree(a) < degree(b); });
  exps_ = std::move(all);
  lookup_.reserve(exps_.size());
  for (std::size_t i = 0; i < exps_.size(); ++i) lookup_.emplace_back(encode(exps_[i]), static_cast<std::uint32_t>(i));
  std::sort(lookup_.begin(), lookup_.end());
}

std::uint64_t JetLayout::encode(const MultiIndex& e) const {
  std::uint64_t key = 0;
  for (int v = 0; v < nvars_; ++v) key = (key << kBits) | static_cast<std::uint64_t>(e[v]);
  return key;
}

int JetLayout::max_degree() const { return std::accumulate(caps_.begin(), caps_.end(), 0); }

std::optional<std::size_t> JetLayout::find(const MultiIndex& e) const {
  if (static_cast<int>(e.size()) != nvars_) return std::nullopt;
  std::vector<int> sums(caps_.size(), 0);
  for (int v = 0; v < nvars_; ++v) {
    if (e[v] < 0) return std::nullopt;
    sums[group_of_var_[v]] += e[v];
  }
  for (std::size_t g = 0; g < caps_.size(); ++g)
    if (sums[g] > caps_[g]) return std::nullopt;
  const auto key = encode(e);
  auto it = std::lower_bound(lookup_.begin(), lookup_.end(), std::make_pair(key, std::uint32_t{0}));
  if (it == lookup_.end() || it->first != key) return std::nullopt;
  return it->second;
}

const std::vector<JetLayout::Product>& JetLayout::products() const {
  std::call_once(products_once_, [this] {
    const std::size_t n = exps_.size();
    std::vector<std::vector<int>> gdeg(n, std::vector<int>(caps_.size(), 0));
    for (std::size_t i = 0; i < n; ++i)
      for (int v = 0; v < nvars_; ++v) gdeg[i][group_of_var_[v]] += exps_[i][v];
    MultiIndex sum(nvars_);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        bool ok = true;
        for (std::size_t g = 0; g < caps_.size() && ok; ++g) ok = gdeg[i][g] + gdeg[j][g] <= caps_[g];
        if (!ok) continue;
        for (int v = 0; v < nvars_; ++v) sum[v] = exps_[i][v] + exps_[j][v];
        const auto key = encode(sum);
        auto it = std::lower_bound(lookup_.begin(), lookup_.end(), std::make_pair(key, std::uint32_t{0}));
        products_.push_back({static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j), it->second});
      }
    }
  });
  return products_;
}

std::shared_ptr<const JetLayout> JetLayout::make(std::vector<int> group_sizes, std::vector<int> caps) {
  static std::mutex mu;
  static std::map<std::pair<std::vector<int>, std::vector<int>>, std::shared_ptr<const JetLayout>> cache;
  for (auto& c : caps) c = std::max(c, 0);
  std::lock_guard lock(mu);
  auto key = std::make_pair(group_sizes, caps);
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;
  auto layout = std::make_shared<const JetLayout>(std::move(group_sizes), std::move(caps));
  cache.emplace(std::move(key), layout);
  return layout;
}

std::shared_ptr<const JetLayout> JetLayout::lowered(int var, int by) const {
  auto caps = caps_;
  caps[group_of_var_[var]] = std::max(0, caps[group_of_var_[var]] - by);
  return make(group_sizes_, caps);
}

CJet complexify(const RJet& j) {
  CJet r(j.layout());
  for (std::size_t i = 0; i < j.size(); ++i) r[i] = j[i];
  return r;
}

RJet real_part(const CJet& j) {
  RJet r(j.layout());
  for (std::size_t i = 0; i < j.size(); ++i) r[i] = j[i].real();
  return r;
}

CJet conj(const CJet& j) {
  CJet r(j.layout());
  for (std::size_t i = 0; i < j.size(); ++i) r[i] = std::conj(j[i]);
  return r;
}

template <class T>
Jet<T> substitute(const Jet<T>& f, const std::vector<Jet<T>>& shifts) {
  const auto& fl = *f.layout();
  if (static_cast<int>(shifts.size()) != fl.nvars()) throw std::invalid_argument("substitute: arity mismatch");
  const LayoutPtr& out = shifts.at(0).layout();
  const int top = out->max_degree();
  // powers[v][k] = h_v^k
  std::vector<std::vector<Jet<T>>> powers(shifts.size());
  for (std::size_t v = 0; v < shifts.size(); ++v) {
    int need = 0;
    for (std::size_t i = 0; i < fl.size(); ++i) need = std::max(need, fl.exponent(i)[v]);
    need = std::min(need, top);
    powers[v].push_back(Jet<T>::constant(out, T(1)));
    for (int k = 1; k <= need; ++k) powers[v].push_back(powers[v].back() * shifts[v]);
  }
  Jet<T> r(out);
  for (std::size_t i = 0; i < fl.size(); ++i) {
    if (f[i] == T{}) continue;
    const auto& e = fl.exponent(i);
    if (degree(e) > top) continue;
    Jet<T> term = Jet<T>::constant(out, f[i]);
    bool first = true;
    for (std::size_t v = 0; v < e.size(); ++v) {
      if (e[v] == 0) continue;
      if (first) {
        term = powers[v][e[v]] * f[i];
        first = false;
      } else {
        term = term * powers[v][e[v]];
      }
    }
    r += term;
  }
  return r;
}

namespace {
template <class T>
std::vector<T> power_derivs(T a, double p, int n) {
  std::vector<T> d(n + 1);
  T coef = T(1);
  for (int k = 0; k <= n; ++k) {
    d[k] = coef * std::pow(a, T(p - k));
    coef *= T(p - k);
  }
  return d;
}
}  // namespace

template <class T>
Jet<T> reciprocal(const Jet<T>& a) {
  if (a.value() == T{}) throw std::domain_error("jet reciprocal of a non-unit");
  return pow(a, -1.0);
}

template <class T>
Jet<T> pow(const Jet<T>& a, double p) {
  const int n = a.layout()->max_degree();
  auto d = power_derivs(a.value(), p, n);
  return a.compose(d);
}

template <class T>
Jet<T> sqrt(const Jet<T>& a) {
  return pow(a, 0.5);
}

template <class T>
Jet<T> exp(const Jet<T>& a) {
  const int n = a.layout()->max_degree();
  std::vector<T> d(n + 1, std::exp(a.value()));
  return a.compose(d);
}

template <class T>
Jet<T> log(const Jet<T>& a) {
  const int n = a.layout()->max_degree();
  std::vector<T> d(n + 1);
  d[0] = std::log(a.value());
  if (n >= 1) {
    auto inv = power_derivs(a.value(), -1.0, n - 1);
    for (int k = 1; k <= n; ++k) d[k] = inv[k - 1];
  }
  return a.compose(d);
}

template <class T>
Jet<T> sin(const Jet<T>& a) {
  const int n = a.layout()->max_degree();
  std::vector<T> d(n + 1);
  const T s = std::sin(a.value()), c = std::cos(a.value());
  const T cyc[4] = {s, c, -s, -c};
  for (int k = 0; k <= n; ++k) d[k] = cyc[k % 4];
  return a.compose(d);
}

template <class T>
Jet<T> cos(const Jet<T>& a) {
  const int n = a.layout()->max_degree();
  std::vector<T> d(n + 1);
  const T s = std::sin(a.value()), c = std::cos(a.value());
  const T cyc[4] = {c, -s, -c, s};
  for (int k = 0; k <= n; ++k) d[k] = cyc[k % 4];
  return a.compose(d);
}

#define PDO_INSTANTIATE(T)                                                 \
  template Jet<T> substitute(const Jet<T>&, const std::vector<Jet<T>>&); \
  template Jet<T> reciprocal(const Jet<T>&);                             \
  template Jet<T> pow(const Jet<T>&, double);                            \
  template Jet<T> sqrt(const Jet<T>&);                                   \
  template Jet<T> exp(const Jet<T>&);                                    \
  template Jet<T> log(const Jet<T>&);                                    \
  template Jet<T> sin(const Jet<T>&);                                    \
  template Jet<T> cos(const Jet<T>&);

PDO_INSTANTIATE(double)
PDO_INSTANTIATE(cplx)

}  // namespace pdo
