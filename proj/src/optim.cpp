#include "ebxmse/optim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace ebxmse {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kMaxGridPoints = 65536.0;
constexpr int kMaxRestarts = 50;

struct Search {
    const Box &box;
    Vec lo, hi;

    explicit Search(const Box &b) : box(b), lo(b.dim()), hi(b.dim()) {
        for (Eigen::Index i = 0; i < b.dim(); ++i) {
            const bool ls = b.log_scale[static_cast<std::size_t>(i)];
            require(b.lower[i] <= b.upper[i], "minimize_box: lower bound above upper bound");
            require(!ls || b.lower[i] > 0.0, "minimize_box: log-scale bound must be positive");
            lo[i] = ls ? std::log(b.lower[i]) : b.lower[i];
            hi[i] = ls ? std::log(b.upper[i]) : b.upper[i];
        }
    }

    Vec to_eta(const Vec &z) const {
        Vec eta(z.size());
        for (Eigen::Index i = 0; i < z.size(); ++i) {
            const double zi = std::clamp(z[i], lo[i], hi[i]);
            eta[i] = box.log_scale[static_cast<std::size_t>(i)] ? std::exp(zi) : zi;
            eta[i] = std::clamp(eta[i], box.lower[i], box.upper[i]);
        }
        return eta;
    }

    Vec clamp(const Vec &z) const { return z.cwiseMax(lo).cwiseMin(hi); }
};

bool lex_less(const Vec &a, const Vec &b) {
    return std::lexicographical_compare(a.data(), a.data() + a.size(), b.data(), b.data() + b.size());
}

// strict improvement, or equal value at a lexicographically smaller point
bool better(double fa, const Vec &a, double fb, const Vec &b) {
    if (fa < fb) { return true; }
    if (fa > fb) { return false; }
    return lex_less(a, b);
}

}  // namespace

OptimResult minimize_box(const std::function<double(const Vec &)> &f, const Box &box,
                         const OptimizerSettings &settings) {
    const Eigen::Index p = box.dim();
    require(p >= 1, "minimize_box: empty box");
    require(static_cast<Eigen::Index>(box.log_scale.size()) == p, "minimize_box: log_scale size mismatch");
    require(settings.grid >= 2, "minimize_box: grid must have at least 2 points per coordinate");
    require(settings.tol > 0.0, "minimize_box: tol must be positive");
    const Search s(box);

    OptimResult out;
    auto eval = [&](const Vec &z) {
        ++out.evaluations;
        double v = kInf;
        try {
            v = f(s.to_eta(z));
        } catch (const NumericError &) {
            v = kInf;
        }
        return std::isfinite(v) ? v : kInf;
    };

    // coarse grid, enumerated with coordinate 0 varying slowest; density is reduced in high dimension
    int g = settings.grid;
    while (g > 2 && std::pow(static_cast<double>(g), static_cast<double>(p)) > kMaxGridPoints) { --g; }
    Eigen::Index total = 1;
    for (Eigen::Index i = 0; i < p; ++i) { total *= g; }
    std::vector<Vec> pts;
    std::vector<double> vals;
    pts.reserve(static_cast<std::size_t>(total));
    vals.reserve(static_cast<std::size_t>(total));
    Vec step = (s.hi - s.lo) / static_cast<double>(g - 1);
    for (Eigen::Index idx = 0; idx < total; ++idx) {
        Vec z(p);
        Eigen::Index r = idx;
        for (Eigen::Index i = p - 1; i >= 0; --i) {
            const auto j = static_cast<double>(r % g);
            r /= g;
            z[i] = s.lo[i] + j * step[i];
        }
        z = s.clamp(z);
        pts.push_back(z);
        vals.push_back(eval(z));
    }
    std::vector<std::size_t> order(pts.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return better(vals[a], pts[a], vals[b], pts[b]); });
    if (!std::isfinite(vals[order[0]])) {
        throw NumericError("minimize_box: cost is non-finite at every grid point");
    }

    Vec best_z = pts[order[0]];
    double best_f = vals[order[0]];

    // Nelder-Mead, standard coefficients, from z0 with edges h along each axis
    auto nelder_mead = [&](const Vec &z0, double f0, double &f_out) {
        std::vector<Vec> simplex;
        std::vector<double> fs;
        simplex.push_back(z0);
        fs.push_back(f0);
        for (Eigen::Index i = 0; i < p; ++i) {
            Vec z = z0;
            const double h = step[i] > 0.0 ? step[i] : 1.0;
            z[i] = (z0[i] + h <= s.hi[i]) ? z0[i] + h : z0[i] - h;
            z = s.clamp(z);
            simplex.push_back(z);
            fs.push_back(eval(z));
        }
        const auto m = simplex.size();
        std::vector<std::size_t> ix(m);
        int it = 0;
        for (; it < settings.max_iter; ++it) {
            std::iota(ix.begin(), ix.end(), 0);
            std::sort(ix.begin(), ix.end(),
                      [&](std::size_t a, std::size_t b) { return better(fs[a], simplex[a], fs[b], simplex[b]); });
            const Vec &zb = simplex[ix[0]];
            double diam = 0.0;
            for (std::size_t k = 1; k < m; ++k) {
                diam = std::max(diam, (simplex[ix[k]] - zb).lpNorm<Eigen::Infinity>());
            }
            if (diam <= settings.tol) { break; }

            Vec centroid = Vec::Zero(p);
            for (std::size_t k = 0; k + 1 < m; ++k) { centroid += simplex[ix[k]]; }
            centroid /= static_cast<double>(m - 1);
            const std::size_t worst = ix[m - 1];
            const double fw = fs[worst];
            const double fsecond = fs[ix[m - 2]];
            const double fbest = fs[ix[0]];

            const Vec zr = s.clamp(centroid + (centroid - simplex[worst]));
            const double fr = eval(zr);
            if (fr < fbest) {
                const Vec ze = s.clamp(centroid + 2.0 * (centroid - simplex[worst]));
                const double fe = eval(ze);
                if (fe < fr) {
                    simplex[worst] = ze;
                    fs[worst] = fe;
                } else {
                    simplex[worst] = zr;
                    fs[worst] = fr;
                }
                continue;
            }
            if (fr < fsecond) {
                simplex[worst] = zr;
                fs[worst] = fr;
                continue;
            }
            const bool outside = fr < fw;
            const Vec zc = outside ? s.clamp(centroid + 0.5 * (zr - centroid))
                                   : s.clamp(centroid + 0.5 * (simplex[worst] - centroid));
            const double fc = eval(zc);
            if (fc < (outside ? fr : fw)) {
                simplex[worst] = zc;
                fs[worst] = fc;
                continue;
            }
            // shrink toward the best vertex
            const Vec zbest = simplex[ix[0]];
            for (std::size_t k = 1; k < m; ++k) {
                simplex[ix[k]] = s.clamp(zbest + 0.5 * (simplex[ix[k]] - zbest));
                fs[ix[k]] = eval(simplex[ix[k]]);
            }
        }
        out.iterations += it;
        std::size_t kb = 0;
        for (std::size_t k = 1; k < m; ++k) {
            if (better(fs[k], simplex[k], fs[kb], simplex[kb])) { kb = k; }
        }
        f_out = fs[kb];
        return simplex[kb];
    };

    const int starts = std::max(1, std::min<int>(settings.starts, static_cast<int>(order.size())));
    for (int st = 0; st < starts; ++st) {
        const std::size_t o = order[static_cast<std::size_t>(st)];
        if (!std::isfinite(vals[o])) { break; }
        Vec z = pts[o];
        double fz = vals[o];
        // restart from the endpoint until a restart no longer improves; a collapsed simplex can stall
        for (int rs = 0; rs < kMaxRestarts; ++rs) {
            double fn = kInf;
            const Vec zn = nelder_mead(z, fz, fn);
            const bool improved = fn < fz;
            if (better(fn, zn, fz, z)) {
                z = zn;
                fz = fn;
            }
            if (!improved) { break; }
        }
        if (better(fz, z, best_f, best_z)) {
            best_f = fz;
            best_z = z;
        }
    }

    out.x = s.to_eta(best_z);
    out.value = best_f;
    out.on_boundary = box.on_boundary(out.x);
    return out;
}

}  // namespace ebxmse
