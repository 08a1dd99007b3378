#include "mskam/series.hpp"

#include <algorithm>
#include <cassert>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <sstream>

namespace mskam {

namespace {

void check_same_dim(const FourierTaylorSeries& a, const FourierTaylorSeries& b) {
    if (a.dim() != b.dim())
        throw std::invalid_argument("series dimension mismatch: " +
                                    std::to_string(a.dim()) + " vs " +
                                    std::to_string(b.dim()));
}

int key_fourier_norm(const FourierTaylorSeries::Key& key, int dim) {
    int n = 0;
    for (int i = 0; i < dim; ++i) n += std::abs(key[i]);
    return n;
}

int key_taylor_order(const FourierTaylorSeries::Key& key, int dim) {
    int n = 0;
    for (int i = 0; i < dim; ++i) n += key[dim + i];
    return n;
}

std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

double parse_double(std::string_view s) {
    double v = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
        throw std::invalid_argument("bad floating-point literal: '" + std::string(s) + "'");
    return v;
}

}  // namespace

MultiIndex::MultiIndex(std::vector<int> e) : entries(std::move(e)) {
    for (int v : entries)
        if (v < 0) throw std::invalid_argument("multi-index entries must be >= 0");
}

int MultiIndex::order() const {
    int n = 0;
    for (int v : entries) n += v;
    return n;
}

int FourierMode::norm() const {
    int n = 0;
    for (int v : entries) n += std::abs(v);
    return n;
}

FourierMode FourierMode::negated() const {
    FourierMode m(entries);
    for (int& v : m.entries) v = -v;
    return m;
}

DomainWindow::DomainWindow(double r, double s, double h)
    : action_radius(r), strip_width(s), param_width(h) {
    if (!(r > 0.0) || !(s > 0.0) || !(h > 0.0))
        throw std::invalid_argument("domain window requires r, s, h > 0");
}

// Accumulating builder shared by the arithmetic operations. Sums into a map,
// then canonicalizes against the scale base of the producing operation.
class SeriesAccum {
public:
    SeriesAccum(int dim) : dim_(dim) {}

    void accumulate(const FourierTaylorSeries::Key& key, Complex value) {
        if (value == Complex(0.0, 0.0)) return;
        auto [it, inserted] = map_.try_emplace(key, value);
        if (!inserted) it->second += value;
    }

    FourierTaylorSeries finalize(bool real_valued, double rel_floor,
                                 std::optional<int> taylor_cutoff,
                                 std::optional<int> fourier_cutoff) {
        FourierTaylorSeries out(dim_);
        out.coeffs_ = std::move(map_);
        out.real_valued_ = real_valued;
        out.rel_floor_ = rel_floor;
        out.taylor_cutoff_ = taylor_cutoff;
        out.fourier_cutoff_ = fourier_cutoff;
        out.apply_cutoffs();
        out.canonicalize(out.max_abs_coefficient());
        return out;
    }

private:
    int dim_;
    FourierTaylorSeries::CoeffMap map_;
};

FourierTaylorSeries::FourierTaylorSeries(int dim) : dim_(dim) {
    if (dim < 1) throw std::invalid_argument("series dimension must be >= 1");
}

FourierTaylorSeries::FourierTaylorSeries(int dim, const std::vector<SeriesTerm>& terms,
                                         bool real_valued, double rel_floor)
    : dim_(dim), real_valued_(real_valued), rel_floor_(rel_floor) {
    if (dim < 1) throw std::invalid_argument("series dimension must be >= 1");
    for (const auto& t : terms) {
        if (static_cast<int>(t.k.entries.size()) != dim ||
            static_cast<int>(t.j.entries.size()) != dim)
            throw std::invalid_argument("term index length != series dimension");
        for (int v : t.j.entries)
            if (v < 0) throw std::invalid_argument("multi-index entries must be >= 0");
        Key key(t.k.entries);
        key.insert(key.end(), t.j.entries.begin(), t.j.entries.end());
        coeffs_[key] += t.value;
    }
    canonicalize(max_abs_coefficient());
    if (real_valued_) enforce_reality();
}

FourierTaylorSeries FourierTaylorSeries::constant(int dim, Complex value) {
    SeriesTerm t{FourierMode(std::vector<int>(dim, 0)),
                 MultiIndex(std::vector<int>(dim, 0)), value};
    return FourierTaylorSeries(dim, {t}, value.imag() == 0.0);
}

FourierTaylorSeries FourierTaylorSeries::action_monomial(int dim, const MultiIndex& j,
                                                         Complex value) {
    SeriesTerm t{FourierMode(std::vector<int>(dim, 0)), j, value};
    return FourierTaylorSeries(dim, {t}, value.imag() == 0.0);
}

FourierTaylorSeries FourierTaylorSeries::harmonic(int dim, const FourierMode& k,
                                                  Complex value) {
    SeriesTerm t{k, MultiIndex(std::vector<int>(dim, 0)), value};
    return FourierTaylorSeries(dim, {t}, false);
}

void FourierTaylorSeries::canonicalize(double scale_base) {
    const double floor = rel_floor_ * scale_base;
    for (auto it = coeffs_.begin(); it != coeffs_.end();) {
        if (std::abs(it->second) <= floor || it->second == Complex(0.0, 0.0))
            it = coeffs_.erase(it);
        else
            ++it;
    }
}

void FourierTaylorSeries::apply_cutoffs() {
    if (!taylor_cutoff_ && !fourier_cutoff_) return;
    for (auto it = coeffs_.begin(); it != coeffs_.end();) {
        bool drop = false;
        if (taylor_cutoff_ && key_taylor_order(it->first, dim_) > *taylor_cutoff_) drop = true;
        if (fourier_cutoff_ && key_fourier_norm(it->first, dim_) > *fourier_cutoff_) drop = true;
        it = drop ? coeffs_.erase(it) : std::next(it);
    }
}

void FourierTaylorSeries::enforce_reality() const {
    for (const auto& [key, value] : coeffs_) {
        Key mirror(key);
        for (int i = 0; i < dim_; ++i) mirror[i] = -mirror[i];
        auto it = coeffs_.find(mirror);
        const Complex expect = std::conj(value);
        if (it == coeffs_.end())
            throw std::invalid_argument("real-valued series lacks conjugate mode");
        const double tol = 1e-12 * std::max(1.0, std::abs(value));
        if (std::abs(it->second - expect) > tol)
            throw std::invalid_argument("real-valued series violates conjugate symmetry");
    }
}

FourierTaylorSeries FourierTaylorSeries::with_cutoffs(std::optional<int> taylor,
                                                      std::optional<int> fourier) const {
    FourierTaylorSeries out(*this);
    out.taylor_cutoff_ = taylor;
    out.fourier_cutoff_ = fourier;
    out.apply_cutoffs();
    return out;
}

FourierTaylorSeries FourierTaylorSeries::with_rel_floor(double rel_floor) const {
    if (rel_floor < 0.0) throw std::invalid_argument("rel_floor must be >= 0");
    FourierTaylorSeries out(*this);
    out.rel_floor_ = rel_floor;
    return out;
}

FourierTaylorSeries FourierTaylorSeries::canonical_with_floor(double rel_floor) const {
    FourierTaylorSeries out = with_rel_floor(rel_floor);
    out.canonicalize(out.max_abs_coefficient());
    return out;
}

Complex FourierTaylorSeries::coefficient(const FourierMode& k, const MultiIndex& j) const {
    Key key(k.entries);
    key.insert(key.end(), j.entries.begin(), j.entries.end());
    auto it = coeffs_.find(key);
    return it == coeffs_.end() ? Complex(0.0, 0.0) : it->second;
}

double FourierTaylorSeries::max_abs_coefficient() const {
    double m = 0.0;
    for (const auto& [key, value] : coeffs_) m = std::max(m, std::abs(value));
    return m;
}

int FourierTaylorSeries::max_taylor_order() const {
    int m = 0;
    for (const auto& [key, value] : coeffs_)
        m = std::max(m, key_taylor_order(key, dim_));
    return m;
}

int FourierTaylorSeries::max_fourier_norm() const {
    int m = 0;
    for (const auto& [key, value] : coeffs_)
        m = std::max(m, key_fourier_norm(key, dim_));
    return m;
}

Complex FourierTaylorSeries::evaluate(const std::vector<Complex>& actions,
                                      const std::vector<Complex>& angles) const {
    if (static_cast<int>(actions.size()) != dim_ ||
        static_cast<int>(angles.size()) != dim_)
        throw std::invalid_argument("evaluation point dimension mismatch");
    Complex total(0.0, 0.0);
    for (const auto& [key, value] : coeffs_) {
        Complex term = value;
        Complex phase(0.0, 0.0);
        for (int i = 0; i < dim_; ++i) {
            for (int p = 0; p < key[dim_ + i]; ++p) term *= actions[i];
            phase += Complex(0.0, static_cast<double>(key[i])) * angles[i];
        }
        total += term * std::exp(phase);
    }
    return total;
}

FourierTaylorSeries FourierTaylorSeries::scaled(Complex factor) const {
    SeriesAccum acc(dim_);
    for (const auto& [key, value] : coeffs_) acc.accumulate(key, value * factor);
    const bool real = real_valued_ && factor.imag() == 0.0;
    return acc.finalize(real, rel_floor_, taylor_cutoff_, fourier_cutoff_);
}

FourierTaylorSeries FourierTaylorSeries::derivative_action(int i) const {
    if (i < 0 || i >= dim_) throw std::invalid_argument("derivative index out of range");
    SeriesAccum acc(dim_);
    for (const auto& [key, value] : coeffs_) {
        const int power = key[dim_ + i];
        if (power == 0) continue;
        Key dkey(key);
        dkey[dim_ + i] -= 1;
        acc.accumulate(dkey, value * static_cast<double>(power));
    }
    return acc.finalize(real_valued_, rel_floor_, std::nullopt, fourier_cutoff_);
}

FourierTaylorSeries FourierTaylorSeries::derivative_angle(int i) const {
    if (i < 0 || i >= dim_) throw std::invalid_argument("derivative index out of range");
    SeriesAccum acc(dim_);
    for (const auto& [key, value] : coeffs_) {
        if (key[i] == 0) continue;
        acc.accumulate(key, value * Complex(0.0, static_cast<double>(key[i])));
    }
    return acc.finalize(real_valued_, rel_floor_, taylor_cutoff_, fourier_cutoff_);
}

FourierTaylorSeries FourierTaylorSeries::conjugated() const {
    SeriesAccum acc(dim_);
    for (const auto& [key, value] : coeffs_) {
        Key mirror(key);
        for (int i = 0; i < dim_; ++i) mirror[i] = -mirror[i];
        acc.accumulate(mirror, std::conj(value));
    }
    return acc.finalize(real_valued_, rel_floor_, taylor_cutoff_, fourier_cutoff_);
}

FourierTaylorSeries FourierTaylorSeries::filter_taylor_below(int max_order) const {
    SeriesAccum acc(dim_);
    for (const auto& [key, value] : coeffs_)
        if (key_taylor_order(key, dim_) <= max_order) acc.accumulate(key, value);
    return acc.finalize(real_valued_, rel_floor_, taylor_cutoff_, fourier_cutoff_);
}

FourierTaylorSeries FourierTaylorSeries::filter_taylor_at_least(int min_order) const {
    SeriesAccum acc(dim_);
    for (const auto& [key, value] : coeffs_)
        if (key_taylor_order(key, dim_) >= min_order) acc.accumulate(key, value);
    return acc.finalize(real_valued_, rel_floor_, taylor_cutoff_, fourier_cutoff_);
}

FourierTaylorSeries FourierTaylorSeries::filter_fourier_below(int max_norm) const {
    SeriesAccum acc(dim_);
    for (const auto& [key, value] : coeffs_)
        if (key_fourier_norm(key, dim_) <= max_norm) acc.accumulate(key, value);
    return acc.finalize(real_valued_, rel_floor_, taylor_cutoff_, fourier_cutoff_);
}

std::vector<FourierMode> FourierTaylorSeries::fourier_support() const {
    std::vector<FourierMode> out;
    FourierMode last;
    bool have_last = false;
    for (const auto& [key, value] : coeffs_) {
        FourierMode mode(std::vector<int>(key.begin(), key.begin() + dim_));
        if (!have_last || !(mode == last)) {
            out.push_back(mode);
            last = mode;
            have_last = true;
        }
    }
    std::sort(out.begin(), out.end(),
              [](const FourierMode& a, const FourierMode& b) { return a.entries < b.entries; });
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

std::string FourierTaylorSeries::to_text() const {
    std::string out;
    for (const auto& [key, value] : coeffs_) {
        for (int i = 0; i < dim_; ++i) {
            if (i) out += ' ';
            out += std::to_string(key[i]);
        }
        out += " | ";
        for (int i = 0; i < dim_; ++i) {
            if (i) out += ' ';
            out += std::to_string(key[dim_ + i]);
        }
        out += " | ";
        out += format_double(value.real());
        out += ' ';
        out += format_double(value.imag());
        out += '\n';
    }
    return out;
}

FourierTaylorSeries FourierTaylorSeries::from_text(int dim, const std::string& text,
                                                   bool real_valued) {
    std::vector<SeriesTerm> terms;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') continue;
        std::replace(line.begin(), line.end(), '|', ' ');
        std::istringstream ls(line);
        SeriesTerm t;
        t.k.entries.resize(dim);
        std::vector<int> j(dim);
        std::string tok;
        try {
            for (int i = 0; i < dim; ++i) {
                if (!(ls >> tok)) throw std::invalid_argument("short line");
                t.k.entries[i] = std::stoi(tok);
            }
            for (int i = 0; i < dim; ++i) {
                if (!(ls >> tok)) throw std::invalid_argument("short line");
                j[i] = std::stoi(tok);
            }
            std::string re, im;
            if (!(ls >> re >> im)) throw std::invalid_argument("short line");
            if (ls >> tok) throw std::invalid_argument("trailing tokens");
            t.j = MultiIndex(j);
            t.value = Complex(parse_double(re), parse_double(im));
        } catch (const std::exception& e) {
            throw std::invalid_argument("series text line " + std::to_string(line_no) +
                                        ": " + e.what());
        }
        terms.push_back(std::move(t));
    }
    return FourierTaylorSeries(dim, terms, real_valued);
}

bool FourierTaylorSeries::same_support_subset_of(const FourierTaylorSeries& other) const {
    for (const auto& [key, value] : coeffs_)
        if (other.coeffs_.find(key) == other.coeffs_.end()) return false;
    return true;
}

FourierTaylorSeries add(const FourierTaylorSeries& a, const FourierTaylorSeries& b) {
    check_same_dim(a, b);
    SeriesAccum acc(a.dim());
    for (const auto& [key, value] : a.coefficients()) acc.accumulate(key, value);
    for (const auto& [key, value] : b.coefficients()) acc.accumulate(key, value);
    std::optional<int> taylor, fourier;
    if (a.taylor_cutoff() && b.taylor_cutoff())
        taylor = std::min(*a.taylor_cutoff(), *b.taylor_cutoff());
    if (a.fourier_cutoff() && b.fourier_cutoff())
        fourier = std::min(*a.fourier_cutoff(), *b.fourier_cutoff());
    return acc.finalize(a.real_valued() && b.real_valued(),
                        std::min(a.rel_floor(), b.rel_floor()), taylor, fourier);
}

FourierTaylorSeries sub(const FourierTaylorSeries& a, const FourierTaylorSeries& b) {
    return add(a, b.scaled(-1.0));
}

FourierTaylorSeries mul(const FourierTaylorSeries& a, const FourierTaylorSeries& b) {
    check_same_dim(a, b);
    const int dim = a.dim();
    SeriesAccum acc(dim);
    for (const auto& [ka, va] : a.coefficients()) {
        for (const auto& [kb, vb] : b.coefficients()) {
            FourierTaylorSeries::Key key(2 * dim);
            for (int i = 0; i < 2 * dim; ++i) key[i] = ka[i] + kb[i];
            acc.accumulate(key, va * vb);
        }
    }
    std::optional<int> taylor, fourier;
    if (a.taylor_cutoff() && b.taylor_cutoff())
        taylor = std::min(*a.taylor_cutoff(), *b.taylor_cutoff());
    else if (a.taylor_cutoff() || b.taylor_cutoff())
        taylor = a.taylor_cutoff() ? a.taylor_cutoff() : b.taylor_cutoff();
    if (a.fourier_cutoff() && b.fourier_cutoff())
        fourier = std::min(*a.fourier_cutoff(), *b.fourier_cutoff());
    else if (a.fourier_cutoff() || b.fourier_cutoff())
        fourier = a.fourier_cutoff() ? a.fourier_cutoff() : b.fourier_cutoff();
    return acc.finalize(a.real_valued() && b.real_valued(),
                        std::min(a.rel_floor(), b.rel_floor()), taylor, fourier);
}

FourierTaylorSeries poisson(const FourierTaylorSeries& f, const FourierTaylorSeries& g) {
    check_same_dim(f, g);
    const int dim = f.dim();
    // {f,g} term pair (k1,j1) x (k2,j2) contributes, for each i with
    // nonzero symplectic weight, i * c1 * c2 * (k1_i j2_i - j1_i k2_i)
    // at key (k1+k2, j1+j2-e_i). Contributions are buffered per key and
    // exact negation pairs are cancelled before summing, so {f,f} is
    // empty bit-for-bit whatever the collision pattern.
    std::map<FourierTaylorSeries::Key, std::vector<Complex>> buffer;
    for (const auto& [k1, c1] : f.coefficients()) {
        for (const auto& [k2, c2] : g.coefficients()) {
            const Complex prod = Complex(0.0, 1.0) * c1 * c2;
            for (int i = 0; i < dim; ++i) {
                const long long weight =
                    static_cast<long long>(k1[i]) * k2[dim + i] -
                    static_cast<long long>(k1[dim + i]) * k2[i];
                if (weight == 0) continue;
                FourierTaylorSeries::Key key(2 * dim);
                for (int q = 0; q < 2 * dim; ++q) key[q] = k1[q] + k2[q];
                key[dim + i] -= 1;
                buffer[key].push_back(prod * static_cast<double>(weight));
            }
        }
    }
    SeriesAccum acc(dim);
    for (auto& [key, values] : buffer) {
        for (std::size_t a = 0; a < values.size(); ++a) {
            if (values[a] == Complex(0.0, 0.0)) continue;
            for (std::size_t b = a + 1; b < values.size(); ++b) {
                if (values[b] == -values[a]) {
                    values[a] = Complex(0.0, 0.0);
                    values[b] = Complex(0.0, 0.0);
                    break;
                }
            }
        }
        Complex sum(0.0, 0.0);
        for (const Complex& v : values) sum += v;
        acc.accumulate(key, sum);
    }
    return acc.finalize(f.real_valued() && g.real_valued(),
                        std::min(f.rel_floor(), g.rel_floor()), std::nullopt, std::nullopt);
}

std::pair<FourierTaylorSeries, FourierTaylorSeries>
truncate(const FourierTaylorSeries& p, long long K, int m) {
    if (K < 1) throw std::invalid_argument("truncation order K must be >= 1");
    if (m < 3) throw std::invalid_argument("taylor degree m must be >= 3");
    const int dim = p.dim();
    SeriesAccum q_acc(dim), r_acc(dim);
    for (const auto& [key, value] : p.coefficients()) {
        if (key_taylor_order(key, dim) > m - 1) continue;
        q_acc.accumulate(key, value);
        if (key_fourier_norm(key, dim) <= K) r_acc.accumulate(key, value);
    }
    auto q = q_acc.finalize(p.real_valued(), p.rel_floor(), m - 1, p.fourier_cutoff());
    const std::optional<int> r_fourier =
        K <= std::numeric_limits<int>::max() ? std::optional<int>(static_cast<int>(K))
                                             : std::nullopt;
    auto r = r_acc.finalize(p.real_valued(), p.rel_floor(), m - 1, r_fourier);
    return {q, r};
}

FourierTaylorSeries average(const FourierTaylorSeries& p) {
    SeriesAccum acc(p.dim());
    for (const auto& [key, value] : p.coefficients()) {
        if (key_fourier_norm(key, p.dim()) == 0) acc.accumulate(key, value);
    }
    return acc.finalize(p.real_valued(), p.rel_floor(), p.taylor_cutoff(),
                        p.fourier_cutoff());
}

double majorant_norm(const FourierTaylorSeries& p, double r, double s) {
    if (!(r > 0.0) || !(s > 0.0))
        throw std::invalid_argument("majorant norm requires r, s > 0");
    const int dim = p.dim();
    double total = 0.0;
    for (const auto& [key, value] : p.coefficients()) {
        const double term = std::abs(value) *
                            std::pow(r, key_taylor_order(key, dim)) *
                            std::exp(key_fourier_norm(key, dim) * s);
        if (!std::isfinite(term))
            throw std::overflow_error("majorant term exceeds representable range");
        total += term;
    }
    if (!std::isfinite(total))
        throw std::overflow_error("majorant sum exceeds representable range");
    return total;
}

FourierTaylorSeries lie_transform(const FourierTaylorSeries& h,
                                  const FourierTaylorSeries& f, int order) {
    if (order < 1) throw std::invalid_argument("lie transform order must be >= 1");
    check_same_dim(h, f);
    FourierTaylorSeries result = h;
    FourierTaylorSeries term = h;
    for (int l = 1; l <= order; ++l) {
        term = poisson(term, f).scaled(1.0 / static_cast<double>(l));
        if (term.empty()) break;
        result = add(result, term);
    }
    return result.with_cutoffs(h.taylor_cutoff(), h.fourier_cutoff());
}

double lie_remainder_majorant(const FourierTaylorSeries& h,
                              const FourierTaylorSeries& f, int order,
                              double r, double s) {
    FourierTaylorSeries term = h;
    double factorial = 1.0;
    for (int l = 1; l <= order + 1; ++l) {
        term = poisson(term, f);
        factorial *= static_cast<double>(l);
        if (term.empty()) return 0.0;
    }
    return majorant_norm(term, r, s) / factorial;
}

}  // namespace mskam
