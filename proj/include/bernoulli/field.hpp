#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace bernoulli {

constexpr int kMaxDim = 4;

/// Point in R^d with d <= 4, stored without heap allocation.
using Point = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, kMaxDim, 1>;
/// Small symmetric d x d matrix.
using SmallMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, kMaxDim, kMaxDim>;
using Index = std::int64_t;
using MultiIndex = std::array<int, kMaxDim>;
using Mask = std::vector<std::uint8_t>;

/// Volume of the unit ball in R^d.
double vol_ball(int d);
/// (d-1)-dimensional measure of the unit sphere S^{d-1}.
double area_sphere(int d);

/// Uniform Cartesian grid of cells. Cells are numbered row-major, last axis fastest.
class Grid {
 public:
  static constexpr Index kDefaultBudget = Index{1} << 24;

  Grid(Point lower, Point upper, std::vector<int> cells, Index budget = kDefaultBudget);
  /// [lo, hi]^dim with n cells per axis.
  static Grid cube(int dim, double lo, double hi, int n);

  int dim() const { return dim_; }
  const Point& lower() const { return lower_; }
  const Point& upper() const { return upper_; }
  int cells(int axis) const { return cells_[axis]; }
  double spacing(int axis) const { return spacing_[axis]; }
  double min_spacing() const;
  double max_spacing() const;
  Index cell_count() const { return count_; }
  double cell_volume() const { return volume_; }
  Index stride(int axis) const { return stride_[axis]; }

  MultiIndex unravel(Index cell) const;
  Index ravel(const MultiIndex& idx) const;
  Point center(Index cell) const;
  /// Lower and upper corner of a cell.
  Point cell_lower(Index cell) const;
  Point cell_upper(Index cell) const;
  /// Cell whose closed box contains x (ties to the upper cell), or -1 outside the grid.
  Index locate(const Point& x) const;
  /// Face neighbour along axis in direction +1/-1, or -1 at the grid edge.
  Index neighbor(Index cell, int axis, int dir) const;

  bool operator==(const Grid& other) const;
  bool operator!=(const Grid& other) const { return !(*this == other); }

 private:
  int dim_;
  Point lower_, upper_;
  std::array<int, kMaxDim> cells_{};
  std::array<double, kMaxDim> spacing_{};
  std::array<Index, kMaxDim> stride_{};
  Index count_;
  double volume_;
};

enum class RegionKind { box, ball, annulus, custom };

/// Shape parameters for make_region. Unused members are ignored for a given kind.
struct RegionShape {
  Point center;
  double radius = 0.0;
  double inner_radius = 0.0;
  Point lower;  // box: empty means the whole grid
  Point upper;
};

/// Subset of grid cells, selected by the centre-in-shape predicate.
class Region {
 public:
  Region(Grid grid, Mask mask, RegionKind kind);

  const Grid& grid() const { return grid_; }
  RegionKind kind() const { return kind_; }
  const Mask& mask() const { return mask_; }
  bool contains(Index cell) const { return cell >= 0 && mask_[static_cast<std::size_t>(cell)] != 0; }
  Index count() const { return count_; }
  double measure() const { return static_cast<double>(count_) * grid_.cell_volume(); }
  std::vector<Index> cells() const;
  /// Mask cells with an unmasked (or out-of-grid) face neighbour.
  Mask boundary_layer() const;
  /// Mask cells with any unmasked (or out-of-grid) neighbour in the 3^d block around them.
  /// These carry Dirichlet data: every other cell has its full element star inside the mask.
  Mask closure_layer() const;
  bool subset_of(const Region& other) const;

 private:
  Grid grid_;
  Mask mask_;
  RegionKind kind_;
  Index count_ = 0;
};

Region make_region(const Grid& grid, RegionKind kind, const RegionShape& shape);
Region make_box(const Grid& grid);
Region make_ball(const Grid& grid, const Point& center, double radius);
Region make_annulus(const Grid& grid, const Point& center, double inner, double outer);
Region make_custom(const Grid& grid, Mask mask);
/// Cells in both regions (same grid required).
Region intersect(const Region& a, const Region& b);

/// Visit every cell whose centre lies in the open ball B_r(x0), in increasing cell order.
void for_each_cell_in_ball(const Grid& grid, const Point& x0, double r,
                           const std::function<void(Index)>& visit);

/// Cell-centred real function. Values outside the region mask are ignored.
struct ScalarField {
  Region region;
  Eigen::VectorXd values;

  explicit ScalarField(Region r, double fill = 0.0);
  ScalarField(Region r, Eigen::VectorXd v);

  const Grid& grid() const { return region.grid(); }
  double operator[](Index cell) const { return values[cell]; }
  double& operator[](Index cell) { return values[cell]; }
};

/// Sample f at every cell centre of the region.
ScalarField sample(const Region& region, const std::function<double(const Point&)>& f);

/// Piecewise-constant symmetric matrix field with certified ellipticity bounds.
class CoefficientField {
 public:
  static CoefficientField identity(const Region& region);
  static CoefficientField constant(const Region& region, const SmallMatrix& m, double lambda, double Lambda);
  static CoefficientField diagonal(const Region& region, const Point& diag);
  /// Per-cell Q diag(e) Q^T with Q a random rotation and e uniform in [lambda, Lambda].
  static CoefficientField random_symmetric(const Region& region, double lambda, double Lambda,
                                           std::uint64_t seed);
  /// Explicit per-cell matrices; column c of `entries` holds cell c row-major.
  static CoefficientField from_entries(const Region& region, Eigen::MatrixXd entries, double lambda,
                                       double Lambda);

  /// Same matrices on a sub-region of the same grid.
  CoefficientField restricted(const Region& sub) const;

  const Region& region() const { return region_; }
  int dim() const { return region_.grid().dim(); }
  double lambda() const { return lambda_; }
  double Lambda() const { return Lambda_; }
  bool uniform() const { return uniform_; }
  SmallMatrix matrix(Index cell) const;

 private:
  CoefficientField(Region region, Eigen::MatrixXd entries, bool uniform, double lambda, double Lambda);
  void validate() const;

  Region region_;
  Eigen::MatrixXd entries_;  // (d*d) x cells, or (d*d) x 1 when uniform
  bool uniform_;
  double lambda_;
  double Lambda_;
};

double l2_norm(const ScalarField& f, const Region& r);
/// sup_{t>0} t |{|f| > t} ∩ r|^{1/q}, exact on the discrete value set.
double weak_lq_norm(const ScalarField& f, double q, const Region& r);
/// Volume-weighted mean of |f - f_B| over the cells of the ball B.
double ball_mean_oscillation(const ScalarField& f, const Point& center, double radius);

// Serialization. Binary layout: int64 dim, per-axis f64 lower, f64 upper, int64 cells,
// then f64 values row-major (NaN outside the mask); all little-endian.
void write_binary(const ScalarField& f, std::ostream& out);
ScalarField read_binary(std::istream& in);
/// One row per masked cell: index columns then value, 17 significant digits.
void write_csv(const ScalarField& f, std::ostream& out);
/// Central slice spanned by the first two axes (the whole field for d <= 2).
void write_csv_slice(const ScalarField& f, std::ostream& out);

/// Locale-independent shortest-roundtrip formatting with 17 significant digits.
std::string format_number(double value);

}  // namespace bernoulli
