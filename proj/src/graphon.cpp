#include "gmfg/graphon.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "gmfg/error.hpp"
#include "gmfg/rng.hpp"

namespace gmfg {

// ---------------------------------------------------------------------------
// StepGraphon

StepGraphon::StepGraphon(int k, std::vector<double> values) : k_(k), values_(std::move(values))
{
    if (k < 1) throw ContractError("step graphon needs k >= 1");
    if (values_.size() != static_cast<std::size_t>(k) * k) throw ContractError("step graphon needs k*k values");
    for (double v : values_)
        if (!(v >= 0.0) || !std::isfinite(v)) throw ContractError("step graphon values must be finite and >= 0");
}

double StepGraphon::e_max() const
{
    return *std::max_element(values_.begin(), values_.end());
}

int StepGraphon::cell(double u) const
{
    // ((i-1)/k, i/k]; the small offset keeps u = i/k from rounding into cell i+1
    int c = static_cast<int>(std::ceil(u * k_ - 1e-9)) - 1;
    return std::clamp(c, 0, k_ - 1);
}

void StepGraphon::save_csv(const std::string& path) const
{
    std::ofstream out(path);
    if (!out) throw Error("cannot write step graphon to " + path);
    out.precision(17);
    out << k_ << "\n";
    for (int i = 0; i < k_; ++i) {
        for (int j = 0; j < k_; ++j) out << (j ? "," : "") << value(i, j);
        out << "\n";
    }
}

StepGraphon StepGraphon::load_csv(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read step graphon file " + path);
    std::string line;
    if (!std::getline(in, line)) throw ConfigError(path + ":1: missing block-count header");
    int k = 0;
    try {
        k = std::stoi(line);
    } catch (const std::exception&) {
        throw ConfigError(path + ":1: header must be the block count k");
    }
    if (k < 1) throw ConfigError(path + ":1: block count must be >= 1");
    std::vector<double> values;
    values.reserve(static_cast<std::size_t>(k) * k);
    for (int i = 0; i < k; ++i) {
        if (!std::getline(in, line)) throw ConfigError(path + ":" + std::to_string(i + 2) + ": missing row");
        std::stringstream ss(line);
        std::string cell;
        int cols = 0;
        while (std::getline(ss, cell, ',')) {
            try {
                values.push_back(std::stod(cell));
            } catch (const std::exception&) {
                throw ConfigError(path + ":" + std::to_string(i + 2) + ": bad value '" + cell + "'");
            }
            ++cols;
        }
        if (cols != k)
            throw ConfigError(path + ":" + std::to_string(i + 2) + ": expected " + std::to_string(k) + " values");
    }
    return StepGraphon(k, std::move(values));
}

// ---------------------------------------------------------------------------
// Graphon

Graphon::Graphon(std::string name, std::function<double(double, double)> rule, double e_max)
    : name_(std::move(name)), rule_(std::move(rule)), e_max_(e_max)
{
    audit_range();
}

Graphon::Graphon(StepGraphon step, std::string name)
    : name_(std::move(name)), e_max_(step.e_max())
{
    step_ = std::make_shared<const StepGraphon>(std::move(step));
    auto s = step_;
    rule_ = [s](double u, double v) { return (*s)(u, v); };
}

void Graphon::audit_range() const
{
    if (!(e_max_ >= 0.0)) throw ContractError("graphon range bound must be >= 0");
    constexpr int probes = 64;
    for (int i = 0; i <= probes; ++i)
        for (int j = 0; j <= probes; ++j) {
            double g = rule_(static_cast<double>(i) / probes, static_cast<double>(j) / probes);
            if (!(g >= 0.0) || g > e_max_ * (1 + 1e-12))
                throw ContractError("graphon '" + name_ + "' leaves [0, e_max] on the probe grid");
        }
}

Graphon Graphon::constant(double c)
{
    if (!(c >= 0.0)) throw ConfigError("constant graphon needs c >= 0");
    std::ostringstream os;
    os << "constant:" << c;
    return Graphon(StepGraphon(1, {c}), os.str());
}

Graphon Graphon::product()
{
    return Graphon("product", [](double u, double v) { return u * v; }, 1.0);
}

Graphon Graphon::sbm(int k, double inter, double intra)
{
    if (k < 1) throw ConfigError("sbm graphon needs k >= 1");
    if (!(inter >= 0.0) || !(intra >= 0.0)) throw ConfigError("sbm graphon values must be >= 0");
    std::vector<double> v(static_cast<std::size_t>(k) * k, inter);
    for (int i = 0; i < k; ++i) v[static_cast<std::size_t>(i * k + i)] = intra;
    std::ostringstream os;
    os << "sbm:" << k << ":" << inter << ":" << intra;
    return Graphon(StepGraphon(k, std::move(v)), os.str());
}

Graphon Graphon::minmax()
{
    return Graphon("minmax", [](double u, double v) { return 1.0 - std::max(u, v); }, 1.0);
}

Graphon Graphon::from_samples(int k, std::vector<double> samples)
{
    if (k < 1 || samples.size() != static_cast<std::size_t>(k) * k)
        throw ContractError("sampled graphon needs k*k samples");
    double emax = 0.0;
    for (double s : samples) {
        if (!(s >= 0.0)) throw ContractError("sampled graphon values must be >= 0");
        emax = std::max(emax, s);
    }
    auto data = std::make_shared<const std::vector<double>>(std::move(samples));
    auto rule = [data, k](double u, double v) {
        auto locate = [k](double w, int& i, double& f) {
            double s = w * k - 0.5;
            if (s <= 0.0) {
                i = 0;
                f = 0.0;
            } else if (s >= k - 1) {
                i = std::max(0, k - 2);
                f = k == 1 ? 0.0 : 1.0;
            } else {
                i = static_cast<int>(s);
                f = s - i;
            }
        };
        int i, j;
        double fu, fv;
        locate(u, i, fu);
        locate(v, j, fv);
        const auto& d = *data;
        auto at = [&](int a, int b) {
            return d[static_cast<std::size_t>(std::min(a, k - 1) * k + std::min(b, k - 1))];
        };
        return (1 - fu) * (1 - fv) * at(i, j) + fu * (1 - fv) * at(i + 1, j) + (1 - fu) * fv * at(i, j + 1) +
               fu * fv * at(i + 1, j + 1);
    };
    return Graphon("samples:" + std::to_string(k), rule, emax);
}

Graphon Graphon::parse(const std::string& spec)
{
    auto parts = [&] {
        std::vector<std::string> out;
        std::stringstream ss(spec);
        std::string item;
        while (std::getline(ss, item, ':')) out.push_back(item);
        return out;
    }();
    auto number = [&](const std::string& s) {
        try {
            std::size_t used = 0;
            double v = std::stod(s, &used);
            if (used != s.size()) throw std::invalid_argument(s);
            return v;
        } catch (const std::exception&) {
            throw ConfigError("graphon spec '" + spec + "': bad number '" + s + "'");
        }
    };
    if (parts.empty()) throw ConfigError("empty graphon spec");
    const std::string& family = parts[0];
    if (family == "constant" && parts.size() == 2) return constant(number(parts[1]));
    if (family == "product" && parts.size() == 1) return product();
    if (family == "minmax" && parts.size() == 1) return minmax();
    if (family == "sbm" && parts.size() == 4) {
        double k = number(parts[1]);
        if (k != std::floor(k)) throw ConfigError("graphon spec '" + spec + "': block count must be an integer");
        return sbm(static_cast<int>(k), number(parts[2]), number(parts[3]));
    }
    if (family == "file" && parts.size() >= 2) {
        std::string path = spec.substr(5);
        return Graphon(StepGraphon::load_csv(path), "file:" + path);
    }
    throw CatalogError("unknown graphon spec '" + spec +
                       "' (expected constant:c, product, sbm:k:inter:intra, minmax, file:<csv>)");
}

// ---------------------------------------------------------------------------
// Matrices and step approximation

InteractionMatrix::InteractionMatrix(int n, std::vector<double> entries) : n_(n), entries_(std::move(entries))
{
    if (n < 1 || entries_.size() != static_cast<std::size_t>(n) * n)
        throw ContractError("interaction matrix needs n >= 1 and n*n entries");
}

InteractionMatrix sample_matrix(const Graphon& graphon, int n)
{
    if (n < 1) throw ContractError("sample_matrix needs n >= 1");
    std::vector<double> e(static_cast<std::size_t>(n) * n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            e[static_cast<std::size_t>(i) * n + j] =
                graphon(static_cast<double>(i + 1) / n, static_cast<double>(j + 1) / n);
    return InteractionMatrix(n, std::move(e));
}

StepGraphon step_approximation(const Graphon& graphon, int k)
{
    if (k < 1) throw ContractError("step_approximation needs k >= 1");
    std::vector<double> v(static_cast<std::size_t>(k) * k);
    for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j) v[static_cast<std::size_t>(i * k + j)] = graphon((i + 0.5) / k, (j + 0.5) / k);
    return StepGraphon(k, std::move(v));
}

// ---------------------------------------------------------------------------
// Label-grid operators

LabelCoupling::LabelCoupling(const Graphon& graphon, int labels) : k_(labels), e_max_(graphon.e_max())
{
    if (labels < 1) throw ContractError("label grid needs K >= 1");
    g_.resize(static_cast<std::size_t>(labels) * labels);
    for (int k = 0; k < labels; ++k)
        for (int l = 0; l < labels; ++l) g_[static_cast<std::size_t>(k * labels + l)] = graphon(label(k), label(l));
}

void weighted_density(const LabelCoupling& coupling, std::span<const double> slice, int nx, std::span<double> out)
{
    const int K = coupling.labels();
    const auto n = static_cast<std::size_t>(nx);
    if (slice.size() != static_cast<std::size_t>(K) * n || out.size() != slice.size())
        throw ContractError("weighted_density: slice shape mismatch");
    for (double p : slice)
        if (p < 0.0 || std::isnan(p)) throw ContractError("weighted_density: negative input density");
    const double w = coupling.weight();
    std::fill(out.begin(), out.end(), 0.0);
    for (int k = 0; k < K; ++k) {
        double* dst = out.data() + static_cast<std::size_t>(k) * n;
        for (int l = 0; l < K; ++l) {
            double c = w * coupling(k, l);
            if (c == 0.0) continue;
            const double* src = slice.data() + static_cast<std::size_t>(l) * n;
            for (std::size_t j = 0; j < n; ++j) dst[j] += c * src[j];
        }
    }
}

LabelMoments label_moments(std::span<const double> slice, int labels, std::span<const double> x, double dx)
{
    const std::size_t n = x.size();
    LabelMoments m;
    m.m0.assign(static_cast<std::size_t>(labels), 0.0);
    m.m1.assign(static_cast<std::size_t>(labels), 0.0);
    m.m2.assign(static_cast<std::size_t>(labels), 0.0);
    for (int l = 0; l < labels; ++l) {
        const double* p = slice.data() + static_cast<std::size_t>(l) * n;
        double s0 = 0, s1 = 0, s2 = 0;
        for (std::size_t j = 0; j < n; ++j) {
            double q = p[j] * dx;
            s0 += q;
            s1 += q * x[j];
            s2 += q * x[j] * x[j];
        }
        m.m0[static_cast<std::size_t>(l)] = s0;
        m.m1[static_cast<std::size_t>(l)] = s1;
        m.m2[static_cast<std::size_t>(l)] = s2;
    }
    return m;
}

EnvStats env_law_stats(const LabelCoupling& coupling, const LabelMoments& mo, int k)
{
    EnvStats r;
    const double w = coupling.weight();
    for (int l = 0; l < coupling.labels(); ++l) {
        auto li = static_cast<std::size_t>(l);
        double e = coupling(k, l);
        r.w0 += w * e * mo.m0[li];
        r.wmean += w * e * mo.m1[li];
        r.mean += w * mo.m1[li];
        r.wsecond += w * e * mo.m2[li];
    }
    return r;
}

EnvStats env_law_stats(const LabelCoupling& coupling, std::span<const double> slice, std::span<const double> x,
                       double dx, int k)
{
    return env_law_stats(coupling, label_moments(slice, coupling.labels(), x, dx), k);
}

EnvStats env_law_stats(std::span<const double> row, std::span<const double> pos)
{
    if (row.size() != pos.size() || row.empty()) throw ContractError("env_law_stats: particle shape mismatch");
    double s0 = 0, s1 = 0, sm = 0, s2 = 0;
    for (std::size_t j = 0; j < row.size(); ++j) {
        double e = row[j], x = pos[j];
        s0 += e;
        s1 += e * x;
        sm += x;
        s2 += e * x * x;
    }
    const double inv = 1.0 / static_cast<double>(row.size());
    return {s0 * inv, s1 * inv, sm * inv, s2 * inv};
}

// ---------------------------------------------------------------------------
// Cut norm

StepKernel StepKernel::uniform(int k, std::vector<double> values)
{
    if (k < 1 || values.size() != static_cast<std::size_t>(k) * k) throw ContractError("uniform kernel needs k*k values");
    StepKernel t;
    t.row_widths.assign(static_cast<std::size_t>(k), 1.0 / k);
    t.col_widths.assign(static_cast<std::size_t>(k), 1.0 / k);
    t.values = std::move(values);
    return t;
}

namespace {

// weighted row sums r_i = w_i * sum_{j in B} T_ij c_j
void row_sums(const StepKernel& t, const std::vector<char>& cols, std::vector<double>& r)
{
    r.assign(t.rows(), 0.0);
    for (std::size_t i = 0; i < t.rows(); ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < t.cols(); ++j)
            if (cols[j]) s += t(i, j) * t.col_widths[j];
        r[i] = s * t.row_widths[i];
    }
}

void col_sums(const StepKernel& t, const std::vector<char>& rows, std::vector<double>& c)
{
    c.assign(t.cols(), 0.0);
    for (std::size_t i = 0; i < t.rows(); ++i) {
        if (!rows[i]) continue;
        for (std::size_t j = 0; j < t.cols(); ++j) c[j] += t(i, j) * t.row_widths[i];
    }
    for (std::size_t j = 0; j < t.cols(); ++j) c[j] *= t.col_widths[j];
}

double rect_integral(const StepKernel& t, const std::vector<char>& rows, const std::vector<char>& cols)
{
    double s = 0.0;
    for (std::size_t i = 0; i < t.rows(); ++i) {
        if (!rows[i]) continue;
        double ri = 0.0;
        for (std::size_t j = 0; j < t.cols(); ++j)
            if (cols[j]) ri += t(i, j) * t.col_widths[j];
        s += ri * t.row_widths[i];
    }
    return s;
}

double exact_cut(const StepKernel& t)
{
    const std::size_t R = t.rows(), C = t.cols();
    std::vector<double> r(R, 0.0);
    double best = 0.0;
    std::uint64_t best_mask = 0;
    int best_sign = 1;
    const std::uint64_t total = 1ull << C;
    std::uint64_t gray = 0;
    for (std::uint64_t m = 1; m < total; ++m) {
        int bit = std::countr_zero(m);
        gray ^= 1ull << bit;
        double sign = (gray >> bit) & 1ull ? 1.0 : -1.0;
        auto jb = static_cast<std::size_t>(bit);
        for (std::size_t i = 0; i < R; ++i) r[i] += sign * t(i, jb) * t.col_widths[jb] * t.row_widths[i];
        double pos = 0.0, neg = 0.0;
        for (double ri : r) (ri > 0.0 ? pos : neg) += ri;
        if (pos > best) {
            best = pos;
            best_mask = gray;
            best_sign = 1;
        }
        if (-neg > best) {
            best = -neg;
            best_mask = gray;
            best_sign = -1;
        }
    }
    if (best == 0.0) return 0.0;
    // recompute the optimum from scratch to shed Gray-code accumulation error
    std::vector<char> cols(C);
    for (std::size_t j = 0; j < C; ++j) cols[j] = static_cast<char>((best_mask >> j) & 1ull);
    row_sums(t, cols, r);
    std::vector<char> rows(R);
    for (std::size_t i = 0; i < R; ++i) rows[i] = static_cast<char>(best_sign * r[i] > 0.0);
    return std::abs(rect_integral(t, rows, cols));
}

double heuristic_cut(const StepKernel& t, std::uint64_t seed, int restarts)
{
    const std::size_t R = t.rows(), C = t.cols();
    NoiseStream stream(seed, 0xC07);
    double best = 0.0;
    std::vector<double> r, c;
    std::vector<char> rows(R), cols(C);
    for (int start = 0; start < std::max(1, restarts); ++start) {
        for (double sign : {1.0, -1.0}) {
            for (std::size_t j = 0; j < C; ++j)
                cols[j] = start == 0 ? 1 : static_cast<char>(stream.uniform(static_cast<std::uint64_t>(start), static_cast<std::uint32_t>(j)) < 0.5);
            double value = -1.0;
            for (int it = 0; it < 200; ++it) {
                row_sums(t, cols, r);
                for (std::size_t i = 0; i < R; ++i) rows[i] = static_cast<char>(sign * r[i] > 0.0);
                col_sums(t, rows, c);
                for (std::size_t j = 0; j < C; ++j) cols[j] = static_cast<char>(sign * c[j] > 0.0);
                double v = sign * rect_integral(t, rows, cols);
                if (v <= value) break;
                value = v;
            }
            best = std::max(best, value);
        }
    }
    return best;
}

} // namespace

double cut_norm(const StepKernel& kernel, CutMode mode, std::uint64_t seed, int restarts)
{
    if (kernel.values.size() != kernel.rows() * kernel.cols() || kernel.rows() == 0 || kernel.cols() == 0)
        throw ContractError("cut_norm: kernel shape mismatch");
    if (mode == CutMode::exact) {
        if (kernel.rows() > 12 || kernel.cols() > 12)
            throw ContractError("cut_norm: exact mode supports at most 12 cells per side (got " +
                                std::to_string(std::max(kernel.rows(), kernel.cols())) + ")");
        return exact_cut(kernel);
    }
    return heuristic_cut(kernel, seed, restarts);
}

namespace {

// breakpoints of the common refinement of uniform partitions with ka and kb cells
std::vector<double> refine(int ka, int kb)
{
    std::vector<double> pts;
    pts.reserve(static_cast<std::size_t>(ka + kb));
    long i = 0, j = 0;
    pts.push_back(0.0);
    while (i < ka || j < kb) {
        // compare (i+1)/ka with (j+1)/kb exactly in integers
        long lhs = (i + 1) * kb, rhs = (j + 1) * ka;
        if (lhs == rhs) {
            ++i;
            ++j;
            pts.push_back(static_cast<double>(i) / ka);
        } else if (lhs < rhs) {
            ++i;
            pts.push_back(static_cast<double>(i) / ka);
        } else {
            ++j;
            pts.push_back(static_cast<double>(j) / kb);
        }
    }
    return pts;
}

} // namespace

StepKernel difference_kernel(const StepGraphon& a, const StepGraphon& b, const std::function<double(double)>& f)
{
    auto pts = refine(a.k(), b.k());
    const std::size_t m = pts.size() - 1;
    std::vector<int> ca(m), cb(m);
    StepKernel t;
    t.row_widths.resize(m);
    for (std::size_t c = 0; c < m; ++c) {
        double mid = 0.5 * (pts[c] + pts[c + 1]);
        t.row_widths[c] = pts[c + 1] - pts[c];
        ca[c] = a.cell(mid);
        cb[c] = b.cell(mid);
    }
    t.col_widths = t.row_widths;
    t.values.resize(m * m);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < m; ++j)
            t.values[i * m + j] = f(a.value(ca[i], ca[j])) - f(b.value(cb[i], cb[j]));
    return t;
}

std::vector<TestMap> default_test_family()
{
    return {
        {"identity", [](double e) { return e; }},
        {"min(e,1)", [](double e) { return std::min(e, 1.0); }},
        {"e/(1+e)", [](double e) { return e / (1.0 + e); }},
    };
}

CutMetric cut_convergence_metric(const StepGraphon& gn, const Graphon& g, const std::vector<TestMap>& family, int k0)
{
    if (family.empty()) throw ContractError("cut_convergence_metric: empty test family");
    StepGraphon reference = step_approximation(g, k0);
    CutMetric out;
    for (const auto& map : family) {
        StepKernel d = difference_kernel(gn, reference, map.f);
        CutMode mode = (d.rows() <= 12) ? CutMode::exact : CutMode::heuristic;
        double v = cut_norm(d, mode);
        out.per_map.push_back(v);
        if (v > out.value || out.attained_by.empty()) {
            out.value = std::max(out.value, v);
            if (v >= out.value) out.attained_by = map.name;
        }
    }
    return out;
}

} // namespace gmfg
