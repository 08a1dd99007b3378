#pragma once

#include <complex>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace mskam {

using Complex = std::complex<double>;

/// Taylor multi-index j = (j_1..j_n), all entries >= 0.
struct MultiIndex {
    std::vector<int> entries;

    MultiIndex() = default;
    explicit MultiIndex(std::vector<int> e);

    int order() const;  // |j| = sum of entries
    bool operator==(const MultiIndex&) const = default;
};

/// Fourier mode k = (k_1..k_n) with |k| = sum |k_i|.
struct FourierMode {
    std::vector<int> entries;

    FourierMode() = default;
    explicit FourierMode(std::vector<int> e) : entries(std::move(e)) {}

    int norm() const;  // l1 norm
    FourierMode negated() const;
    bool operator==(const FourierMode&) const = default;
};

struct SeriesTerm {
    FourierMode k;
    MultiIndex j;
    Complex value;
};

/// Window D_{r,s} x parameter strip: action radius r, angle strip width s,
/// parameter neighborhood width h. All strictly positive.
struct DomainWindow {
    double action_radius = 0.0;     // r
    double strip_width = 0.0;       // s
    double param_width = 0.0;       // h

    DomainWindow() = default;
    DomainWindow(double r, double s, double h);
};

/// Sparse Fourier-Taylor series sum_{k,j} c_{kj} I^j e^{i<k,theta>} over n
/// actions and n angles. Immutable after construction: every operation
/// returns a new value. Canonical form stores no exact zeros and drops
/// coefficients below rel_floor relative to the natural scale of the
/// operation that produced them.
class FourierTaylorSeries {
public:
    // key layout: k_1..k_n, j_1..j_n
    using Key = std::vector<int>;
    using CoeffMap = std::map<Key, Complex>;

    static constexpr double kDefaultRelFloor = 1e-15;

    explicit FourierTaylorSeries(int dim);
    FourierTaylorSeries(int dim, const std::vector<SeriesTerm>& terms,
                        bool real_valued = false,
                        double rel_floor = kDefaultRelFloor);

    static FourierTaylorSeries constant(int dim, Complex value);
    /// Monomial I^j, no angle dependence.
    static FourierTaylorSeries action_monomial(int dim, const MultiIndex& j,
                                               Complex value = 1.0);
    /// e^{i<k,theta>} with a coefficient.
    static FourierTaylorSeries harmonic(int dim, const FourierMode& k,
                                        Complex value = 1.0);

    int dim() const { return dim_; }
    bool empty() const { return coeffs_.empty(); }
    std::size_t term_count() const { return coeffs_.size(); }
    bool real_valued() const { return real_valued_; }
    double rel_floor() const { return rel_floor_; }

    std::optional<int> taylor_cutoff() const { return taylor_cutoff_; }
    std::optional<int> fourier_cutoff() const { return fourier_cutoff_; }
    FourierTaylorSeries with_cutoffs(std::optional<int> taylor,
                                     std::optional<int> fourier) const;
    /// Same coefficients, different canonicalization floor for downstream
    /// operations (0 keeps every nonzero coefficient).
    FourierTaylorSeries with_rel_floor(double rel_floor) const;
    /// Re-canonicalize now against the series' own max with the given floor.
    FourierTaylorSeries canonical_with_floor(double rel_floor) const;

    const CoeffMap& coefficients() const { return coeffs_; }
    Complex coefficient(const FourierMode& k, const MultiIndex& j) const;
    double max_abs_coefficient() const;
    int max_taylor_order() const;   // 0 for empty
    int max_fourier_norm() const;   // 0 for empty

    Complex evaluate(const std::vector<Complex>& actions,
                     const std::vector<Complex>& angles) const;

    FourierTaylorSeries scaled(Complex factor) const;
    FourierTaylorSeries derivative_action(int i) const;   // d/dI_i
    FourierTaylorSeries derivative_angle(int i) const;    // d/dtheta_i
    FourierTaylorSeries conjugated() const;               // complex conjugate series

    /// Keep terms passing the predicate filters; cutoff metadata untouched.
    FourierTaylorSeries filter_taylor_below(int max_order) const;   // |j| <= max_order
    FourierTaylorSeries filter_taylor_at_least(int min_order) const;
    FourierTaylorSeries filter_fourier_below(int max_norm) const;   // |k| <= max_norm

    /// Distinct Fourier modes present (each once, as stored).
    std::vector<FourierMode> fourier_support() const;

    std::string to_text() const;
    static FourierTaylorSeries from_text(int dim, const std::string& text,
                                         bool real_valued = false);

    bool same_support_subset_of(const FourierTaylorSeries& other) const;

private:
    friend class SeriesAccum;
    int dim_;
    CoeffMap coeffs_;
    bool real_valued_ = false;
    double rel_floor_ = kDefaultRelFloor;
    std::optional<int> taylor_cutoff_;
    std::optional<int> fourier_cutoff_;

    void canonicalize(double scale_base);
    void enforce_reality() const;
    void apply_cutoffs();
};

FourierTaylorSeries add(const FourierTaylorSeries& a, const FourierTaylorSeries& b);
FourierTaylorSeries sub(const FourierTaylorSeries& a, const FourierTaylorSeries& b);
FourierTaylorSeries mul(const FourierTaylorSeries& a, const FourierTaylorSeries& b);

/// Poisson bracket {f,g} = df/dtheta dg/dI - df/dI dg/dtheta (sign as in the
/// canonical pair convention {I_1, theta_1} = -1). Bilinear, antisymmetric;
/// the antisymmetry is exact term-by-term, not up to rounding.
FourierTaylorSeries poisson(const FourierTaylorSeries& f, const FourierTaylorSeries& g);

/// Split p into (q, r): q keeps all modes with |j| <= m-1, r additionally
/// restricts to |k| <= K.
std::pair<FourierTaylorSeries, FourierTaylorSeries>
truncate(const FourierTaylorSeries& p, long long K, int m);

/// Angle average [p]: the k = 0 part.
FourierTaylorSeries average(const FourierTaylorSeries& p);

/// Weighted l1 majorant sum |c_{kj}| r^{|j|} e^{|k| s}; an upper bound for
/// the sup of |p| on D_{r,s}. Throws on overflow.
double majorant_norm(const FourierTaylorSeries& p, double r, double s);

/// Order-L Lie series sum_{l=0..L} ad_f^l(h) / l!, ad_f(h) = {h, f}.
/// Result truncated to h's cutoffs when set.
FourierTaylorSeries lie_transform(const FourierTaylorSeries& h,
                                  const FourierTaylorSeries& f, int order);

/// Majorant of the first dropped Lie term ad_f^{L+1}(h)/(L+1)! on (r, s).
double lie_remainder_majorant(const FourierTaylorSeries& h,
                              const FourierTaylorSeries& f, int order,
                              double r, double s);

}  // namespace mskam
