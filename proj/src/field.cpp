#include "bernoulli/field.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <istream>
#include <limits>
#include <numbers>
#include <ostream>
#include <random>
#include <stdexcept>

#include <Eigen/Eigenvalues>
#include <Eigen/QR>

namespace bernoulli {

double vol_ball(int d) {
  return std::pow(std::numbers::pi, 0.5 * d) / std::tgamma(0.5 * d + 1.0);
}

double area_sphere(int d) {
  return 2.0 * std::pow(std::numbers::pi, 0.5 * d) / std::tgamma(0.5 * d);
}

// ---------------------------------------------------------------------------
// Grid

Grid::Grid(Point lower, Point upper, std::vector<int> cells, Index budget)
    : dim_(static_cast<int>(cells.size())), lower_(std::move(lower)), upper_(std::move(upper)) {
  if (dim_ < 1 || dim_ > kMaxDim) throw std::invalid_argument("grid dimension must be in [1, 4]");
  if (lower_.size() != dim_ || upper_.size() != dim_)
    throw std::invalid_argument("grid extents do not match dimension");
  count_ = 1;
  for (int i = 0; i < dim_; ++i) {
    if (cells[i] < 2) throw std::invalid_argument("grid needs at least 2 cells per axis");
    if (!(upper_[i] > lower_[i])) throw std::invalid_argument("grid extent must be positive");
    cells_[i] = cells[i];
    spacing_[i] = (upper_[i] - lower_[i]) / cells[i];
    count_ *= cells[i];
    if (count_ > budget) throw std::invalid_argument("grid exceeds the cell budget");
  }
  volume_ = 1.0;
  for (int i = 0; i < dim_; ++i) volume_ *= spacing_[i];
  stride_[dim_ - 1] = 1;
  for (int i = dim_ - 2; i >= 0; --i) stride_[i] = stride_[i + 1] * cells_[i + 1];
}

Grid Grid::cube(int dim, double lo, double hi, int n) {
  if (dim < 1 || dim > kMaxDim) throw std::invalid_argument("grid dimension must be in [1, 4]");
  return Grid(Point::Constant(dim, lo), Point::Constant(dim, hi), std::vector<int>(dim, n));
}

double Grid::min_spacing() const {
  return *std::min_element(spacing_.begin(), spacing_.begin() + dim_);
}

double Grid::max_spacing() const {
  return *std::max_element(spacing_.begin(), spacing_.begin() + dim_);
}

MultiIndex Grid::unravel(Index cell) const {
  MultiIndex idx{};
  for (int i = 0; i < dim_; ++i) {
    idx[i] = static_cast<int>(cell / stride_[i]);
    cell -= static_cast<Index>(idx[i]) * stride_[i];
  }
  return idx;
}

Index Grid::ravel(const MultiIndex& idx) const {
  Index cell = 0;
  for (int i = 0; i < dim_; ++i) cell += static_cast<Index>(idx[i]) * stride_[i];
  return cell;
}

Point Grid::center(Index cell) const {
  const MultiIndex idx = unravel(cell);
  Point x(dim_);
  for (int i = 0; i < dim_; ++i) x[i] = lower_[i] + (idx[i] + 0.5) * spacing_[i];
  return x;
}

Point Grid::cell_lower(Index cell) const {
  const MultiIndex idx = unravel(cell);
  Point x(dim_);
  for (int i = 0; i < dim_; ++i) x[i] = lower_[i] + idx[i] * spacing_[i];
  return x;
}

Point Grid::cell_upper(Index cell) const {
  const MultiIndex idx = unravel(cell);
  Point x(dim_);
  for (int i = 0; i < dim_; ++i) x[i] = lower_[i] + (idx[i] + 1) * spacing_[i];
  return x;
}

Index Grid::locate(const Point& x) const {
  MultiIndex idx{};
  for (int i = 0; i < dim_; ++i) {
    if (x[i] < lower_[i] || x[i] > upper_[i]) return -1;
    int k = static_cast<int>(std::floor((x[i] - lower_[i]) / spacing_[i]));
    idx[i] = std::clamp(k, 0, cells_[i] - 1);
  }
  return ravel(idx);
}

Index Grid::neighbor(Index cell, int axis, int dir) const {
  const int k = static_cast<int>((cell / stride_[axis]) % cells_[axis]) + dir;
  if (k < 0 || k >= cells_[axis]) return -1;
  return cell + dir * stride_[axis];
}

bool Grid::operator==(const Grid& other) const {
  if (dim_ != other.dim_) return false;
  for (int i = 0; i < dim_; ++i) {
    if (cells_[i] != other.cells_[i] || lower_[i] != other.lower_[i] || upper_[i] != other.upper_[i])
      return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Region

Region::Region(Grid grid, Mask mask, RegionKind kind)
    : grid_(std::move(grid)), mask_(std::move(mask)), kind_(kind) {
  if (static_cast<Index>(mask_.size()) != grid_.cell_count())
    throw std::invalid_argument("mask size does not match grid");
  count_ = std::count_if(mask_.begin(), mask_.end(), [](std::uint8_t m) { return m != 0; });
  if (count_ == 0) throw std::invalid_argument("degenerate region");
}

std::vector<Index> Region::cells() const {
  std::vector<Index> out;
  out.reserve(static_cast<std::size_t>(count_));
  for (Index c = 0; c < grid_.cell_count(); ++c)
    if (mask_[c]) out.push_back(c);
  return out;
}

Mask Region::boundary_layer() const {
  Mask layer(mask_.size(), 0);
  for (Index c = 0; c < grid_.cell_count(); ++c) {
    if (!mask_[c]) continue;
    for (int a = 0; a < grid_.dim() && !layer[c]; ++a) {
      for (int dir : {-1, 1}) {
        const Index nb = grid_.neighbor(c, a, dir);
        if (nb < 0 || !mask_[nb]) {
          layer[c] = 1;
          break;
        }
      }
    }
  }
  return layer;
}

Mask Region::closure_layer() const {
  const int d = grid_.dim();
  Mask layer(mask_.size(), 0);
  for (Index c = 0; c < grid_.cell_count(); ++c) {
    if (!mask_[c]) continue;
    const MultiIndex idx = grid_.unravel(c);
    // every offset in {-1,0,1}^d
    int total = 1;
    for (int a = 0; a < d; ++a) total *= 3;
    for (int t = 0; t < total && !layer[c]; ++t) {
      Index nb = c;
      int rest = t;
      for (int a = 0; a < d; ++a, rest /= 3) {
        const int off = rest % 3 - 1;
        const int j = idx[a] + off;
        if (j < 0 || j >= grid_.cells(a)) {
          nb = -1;
          break;
        }
        nb += off * grid_.stride(a);
      }
      if (nb < 0 || !mask_[nb]) layer[c] = 1;
    }
  }
  return layer;
}

bool Region::subset_of(const Region& other) const {
  if (grid_ != other.grid_) return false;
  for (std::size_t c = 0; c < mask_.size(); ++c)
    if (mask_[c] && !other.mask_[c]) return false;
  return true;
}

Region make_region(const Grid& grid, RegionKind kind, const RegionShape& shape) {
  Mask mask(static_cast<std::size_t>(grid.cell_count()), 0);
  const int d = grid.dim();
  auto require_center = [&] {
    if (shape.center.size() != d) throw std::invalid_argument("region centre has wrong dimension");
  };
  switch (kind) {
    case RegionKind::box: {
      const bool whole = shape.lower.size() == 0;
      for (Index c = 0; c < grid.cell_count(); ++c) {
        if (whole) {
          mask[c] = 1;
          continue;
        }
        const Point x = grid.center(c);
        bool in = true;
        for (int i = 0; i < d; ++i) in = in && x[i] >= shape.lower[i] && x[i] <= shape.upper[i];
        mask[c] = in;
      }
      break;
    }
    case RegionKind::ball: {
      require_center();
      const double r2 = shape.radius * shape.radius;
      for (Index c = 0; c < grid.cell_count(); ++c)
        mask[c] = shape.radius > 0.0 && (grid.center(c) - shape.center).squaredNorm() < r2;
      break;
    }
    case RegionKind::annulus: {
      require_center();
      if (shape.inner_radius < 0.0 || shape.inner_radius > shape.radius)
        throw std::invalid_argument("annulus radii out of order");
      const double ro2 = shape.radius * shape.radius;
      const double ri2 = shape.inner_radius * shape.inner_radius;
      for (Index c = 0; c < grid.cell_count(); ++c) {
        const double s = (grid.center(c) - shape.center).squaredNorm();
        mask[c] = s >= ri2 && s < ro2;
      }
      break;
    }
    case RegionKind::custom:
      throw std::invalid_argument("custom regions are built with make_custom");
  }
  return Region(grid, std::move(mask), kind);
}

void for_each_cell_in_ball(const Grid& grid, const Point& x0, double r,
                           const std::function<void(Index)>& visit) {
  const int d = grid.dim();
  if (!(r > 0.0)) return;
  MultiIndex lo{}, hi{};
  for (int i = 0; i < d; ++i) {
    lo[i] = std::max(0, static_cast<int>(std::floor((x0[i] - r - grid.lower()[i]) / grid.spacing(i))) - 1);
    hi[i] = std::min(grid.cells(i) - 1,
                     static_cast<int>(std::floor((x0[i] + r - grid.lower()[i]) / grid.spacing(i))) + 1);
    if (lo[i] > hi[i]) return;
  }
  const double r2 = r * r;
  MultiIndex idx = lo;
  while (true) {
    double s = 0.0;
    for (int i = 0; i < d; ++i) {
      const double x = grid.lower()[i] + (idx[i] + 0.5) * grid.spacing(i) - x0[i];
      s += x * x;
    }
    if (s < r2) visit(grid.ravel(idx));
    int a = d - 1;
    while (a >= 0 && ++idx[a] > hi[a]) {
      idx[a] = lo[a];
      --a;
    }
    if (a < 0) break;
  }
}

Region make_box(const Grid& grid) { return make_region(grid, RegionKind::box, {}); }

Region make_ball(const Grid& grid, const Point& center, double radius) {
  RegionShape s;
  s.center = center;
  s.radius = radius;
  return make_region(grid, RegionKind::ball, s);
}

Region make_annulus(const Grid& grid, const Point& center, double inner, double outer) {
  RegionShape s;
  s.center = center;
  s.radius = outer;
  s.inner_radius = inner;
  return make_region(grid, RegionKind::annulus, s);
}

Region make_custom(const Grid& grid, Mask mask) {
  return Region(grid, std::move(mask), RegionKind::custom);
}

Region intersect(const Region& a, const Region& b) {
  if (a.grid() != b.grid()) throw std::invalid_argument("regions live on different grids");
  Mask m(a.mask().size());
  for (std::size_t c = 0; c < m.size(); ++c) m[c] = a.mask()[c] && b.mask()[c];
  return Region(a.grid(), std::move(m), RegionKind::custom);
}

// ---------------------------------------------------------------------------
// Fields

ScalarField::ScalarField(Region r, double fill)
    : region(std::move(r)), values(Eigen::VectorXd::Constant(region.grid().cell_count(), fill)) {}

ScalarField::ScalarField(Region r, Eigen::VectorXd v) : region(std::move(r)), values(std::move(v)) {
  if (values.size() != region.grid().cell_count())
    throw std::invalid_argument("field values do not match grid");
}

ScalarField sample(const Region& region, const std::function<double(const Point&)>& f) {
  ScalarField out(region);
  const Grid& g = region.grid();
  for (Index c = 0; c < g.cell_count(); ++c)
    if (region.contains(c)) out.values[c] = f(g.center(c));
  return out;
}

CoefficientField::CoefficientField(Region region, Eigen::MatrixXd entries, bool uniform,
                                   double lambda, double Lambda)
    : region_(std::move(region)),
      entries_(std::move(entries)),
      uniform_(uniform),
      lambda_(lambda),
      Lambda_(Lambda) {
  validate();
}

CoefficientField CoefficientField::identity(const Region& region) {
  const int d = region.grid().dim();
  SmallMatrix m = SmallMatrix::Identity(d, d);
  return constant(region, m, 1.0, 1.0);
}

CoefficientField CoefficientField::constant(const Region& region, const SmallMatrix& m, double lambda,
                                            double Lambda) {
  const int d = region.grid().dim();
  if (m.rows() != d || m.cols() != d) throw std::invalid_argument("coefficient matrix has wrong size");
  Eigen::MatrixXd e(d * d, 1);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) e(i * d + j, 0) = m(i, j);
  return CoefficientField(region, std::move(e), true, lambda, Lambda);
}

CoefficientField CoefficientField::diagonal(const Region& region, const Point& diag) {
  const int d = region.grid().dim();
  if (diag.size() != d) throw std::invalid_argument("diagonal has wrong size");
  SmallMatrix m = SmallMatrix::Zero(d, d);
  for (int i = 0; i < d; ++i) m(i, i) = diag[i];
  return constant(region, m, diag.minCoeff(), diag.maxCoeff());
}

CoefficientField CoefficientField::random_symmetric(const Region& region, double lambda,
                                                    double Lambda, std::uint64_t seed) {
  const Grid& g = region.grid();
  const int d = g.dim();
  Eigen::MatrixXd e = Eigen::MatrixXd::Zero(d * d, g.cell_count());
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> uni(lambda, Lambda);
  for (Index c = 0; c < g.cell_count(); ++c) {
    SmallMatrix z(d, d);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) z(i, j) = normal(rng);
    const SmallMatrix q = Eigen::HouseholderQR<SmallMatrix>(z).householderQ();
    Point ev(d);
    for (int i = 0; i < d; ++i) ev[i] = uni(rng);
    SmallMatrix m = q * ev.asDiagonal() * q.transpose();
    m = 0.5 * (m + m.transpose()).eval();
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) e(i * d + j, c) = m(i, j);
  }
  return CoefficientField(region, std::move(e), false, lambda, Lambda);
}

CoefficientField CoefficientField::from_entries(const Region& region, Eigen::MatrixXd entries,
                                                double lambda, double Lambda) {
  const int d = region.grid().dim();
  if (entries.rows() != d * d || entries.cols() != region.grid().cell_count())
    throw std::invalid_argument("coefficient entries have wrong shape");
  return CoefficientField(region, std::move(entries), false, lambda, Lambda);
}

CoefficientField CoefficientField::restricted(const Region& sub) const {
  if (!sub.subset_of(region_)) throw std::invalid_argument("sub-region leaves the coefficient region");
  return CoefficientField(sub, entries_, uniform_, lambda_, Lambda_);
}

SmallMatrix CoefficientField::matrix(Index cell) const {
  const int d = dim();
  const Index col = uniform_ ? 0 : cell;
  SmallMatrix m(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) m(i, j) = entries_(i * d + j, col);
  return m;
}

void CoefficientField::validate() const {
  if (!(lambda_ > 0.0) || !(Lambda_ >= lambda_))
    throw std::invalid_argument("ellipticity bounds must satisfy 0 < lambda <= Lambda");
  const int d = dim();
  auto check = [&](Index col) {
    SmallMatrix m(d, d);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) m(i, j) = entries_(i * d + j, col);
    if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-12)
      throw std::invalid_argument("coefficient matrix is not symmetric");
    Eigen::SelfAdjointEigenSolver<SmallMatrix> es(m, Eigen::EigenvaluesOnly);
    const auto& ev = es.eigenvalues();
    if (ev.minCoeff() < lambda_ - 1e-9 || ev.maxCoeff() > Lambda_ + 1e-9)
      throw std::invalid_argument("coefficient eigenvalue outside [lambda, Lambda]");
  };
  if (uniform_) {
    check(0);
    return;
  }
  for (Index c = 0; c < region_.grid().cell_count(); ++c)
    if (region_.contains(c)) check(c);
}

// ---------------------------------------------------------------------------
// Reductions

namespace {

void require_subset(const Region& r, const ScalarField& f) {
  if (!r.subset_of(f.region)) throw std::invalid_argument("region mask is not inside the field mask");
}

}  // namespace

double l2_norm(const ScalarField& f, const Region& r) {
  require_subset(r, f);
  double sum = 0.0;
  for (Index c = 0; c < r.grid().cell_count(); ++c)
    if (r.contains(c)) sum += f.values[c] * f.values[c];
  return std::sqrt(sum * r.grid().cell_volume());
}

double weak_lq_norm(const ScalarField& f, double q, const Region& r) {
  if (!(q > 0.0)) throw std::invalid_argument("weak-Lq exponent must be positive");
  require_subset(r, f);
  std::vector<double> v;
  v.reserve(static_cast<std::size_t>(r.count()));
  for (Index c = 0; c < r.grid().cell_count(); ++c) {
    if (!r.contains(c)) continue;
    const double a = std::abs(f.values[c]);
    if (std::isinf(a)) return std::numeric_limits<double>::infinity();
    if (a > 0.0) v.push_back(a);
  }
  std::sort(v.begin(), v.end(), std::greater<>());
  // As t increases to a level value v_k, |{f > t}| counts every cell with value >= v_k.
  const double vol = r.grid().cell_volume();
  double best = 0.0;
  for (std::size_t k = 0; k < v.size(); ++k) {
    if (k + 1 < v.size() && v[k + 1] == v[k]) continue;
    best = std::max(best, v[k] * std::pow(static_cast<double>(k + 1) * vol, 1.0 / q));
  }
  return best;
}

double ball_mean_oscillation(const ScalarField& f, const Point& center, double radius) {
  double sum = 0.0;
  Index n = 0;
  std::vector<Index> cells;
  for_each_cell_in_ball(f.grid(), center, radius, [&](Index c) {
    if (!f.region.contains(c)) throw std::invalid_argument("ball leaves the field region");
    cells.push_back(c);
    sum += f.values[c];
    ++n;
  });
  if (n == 0) throw std::invalid_argument("ball contains no cells");
  const double mean = sum / static_cast<double>(n);
  double osc = 0.0;
  for (Index c : cells) osc += std::abs(f.values[c] - mean);
  return osc / static_cast<double>(n);
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

void put_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xffu);
  out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  if (!in) throw std::runtime_error("truncated field file");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

void put_f64(std::ostream& out, double x) { put_u64(out, std::bit_cast<std::uint64_t>(x)); }
double get_f64(std::istream& in) { return std::bit_cast<double>(get_u64(in)); }

}  // namespace

void write_binary(const ScalarField& f, std::ostream& out) {
  const Grid& g = f.grid();
  put_u64(out, static_cast<std::uint64_t>(g.dim()));
  for (int i = 0; i < g.dim(); ++i) {
    put_f64(out, g.lower()[i]);
    put_f64(out, g.upper()[i]);
  }
  for (int i = 0; i < g.dim(); ++i) put_u64(out, static_cast<std::uint64_t>(g.cells(i)));
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (Index c = 0; c < g.cell_count(); ++c) put_f64(out, f.region.contains(c) ? f.values[c] : nan);
}

ScalarField read_binary(std::istream& in) {
  const auto dim = static_cast<int>(get_u64(in));
  if (dim < 1 || dim > kMaxDim) throw std::runtime_error("bad field header");
  Point lo(dim), hi(dim);
  for (int i = 0; i < dim; ++i) {
    lo[i] = get_f64(in);
    hi[i] = get_f64(in);
  }
  std::vector<int> cells(dim);
  for (int i = 0; i < dim; ++i) cells[i] = static_cast<int>(get_u64(in));
  Grid g(lo, hi, cells);
  Eigen::VectorXd v(g.cell_count());
  Mask m(static_cast<std::size_t>(g.cell_count()));
  for (Index c = 0; c < g.cell_count(); ++c) {
    v[c] = get_f64(in);
    m[c] = !std::isnan(v[c]);
    if (!m[c]) v[c] = 0.0;
  }
  const bool full = std::all_of(m.begin(), m.end(), [](std::uint8_t b) { return b != 0; });
  Region r(g, std::move(m), full ? RegionKind::box : RegionKind::custom);
  return ScalarField(std::move(r), std::move(v));
}

std::string format_number(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), value, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

void write_csv(const ScalarField& f, std::ostream& out) {
  const Grid& g = f.grid();
  for (int i = 0; i < g.dim(); ++i) out << 'i' << i << ',';
  out << "value\n";
  for (Index c = 0; c < g.cell_count(); ++c) {
    if (!f.region.contains(c)) continue;
    const MultiIndex idx = g.unravel(c);
    for (int i = 0; i < g.dim(); ++i) out << idx[i] << ',';
    out << format_number(f.values[c]) << '\n';
  }
}

void write_csv_slice(const ScalarField& f, std::ostream& out) {
  const Grid& g = f.grid();
  const int d = g.dim();
  out << "i0" << (d > 1 ? ",i1" : "") << ",x0" << (d > 1 ? ",x1" : "") << ",value\n";
  for (Index c = 0; c < g.cell_count(); ++c) {
    if (!f.region.contains(c)) continue;
    const MultiIndex idx = g.unravel(c);
    bool on_slice = true;
    for (int i = 2; i < d; ++i) on_slice = on_slice && idx[i] == g.cells(i) / 2;
    if (!on_slice) continue;
    const Point x = g.center(c);
    out << idx[0];
    if (d > 1) out << ',' << idx[1];
    out << ',' << format_number(x[0]);
    if (d > 1) out << ',' << format_number(x[1]);
    out << ',' << format_number(f.values[c]) << '\n';
  }
}

}  // namespace bernoulli
