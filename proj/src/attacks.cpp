#include "fedpoison/attacks.hpp"

#include <algorithm>
#include <cmath>

#include "fedpoison/stats.hpp"

namespace fedpoison {

namespace {

const std::pair<AttackFamily, const char*> kFamilyNames[] = {
    {AttackFamily::None, "none"},
    {AttackFamily::FlameTailored, "flame_tailored"},
    {AttackFamily::MdamTailored, "mdam_tailored"},
    {AttackFamily::AgnosticTargeted, "agnostic_targeted"},
    {AttackFamily::CCTailored, "cc_tailored"},
    {AttackFamily::LIE, "lie"},
    {AttackFamily::Fang, "fang"},
    {AttackFamily::DBA, "dba"},
    {AttackFamily::SignFlip, "sign_flip"},
    {AttackFamily::LabelFlip, "label_flip"},
    {AttackFamily::ClassBias, "class_bias"},
    {AttackFamily::NaiveFixed, "naive_fixed"},
    {AttackFamily::NaiveRandom, "naive_random"},
};

}  // namespace

std::string to_string(AttackFamily f) {
    for (const auto& [k, name] : kFamilyNames)
        if (k == f) return name;
    return "?";
}

AttackFamily attack_family_from_string(const std::string& s) {
    for (const auto& [k, name] : kFamilyNames)
        if (s == name) return k;
    throw std::invalid_argument("unknown attack family '" + s + "'");
}

bool is_targeted(AttackFamily f) {
    return f == AttackFamily::FlameTailored || f == AttackFamily::MdamTailored || f == AttackFamily::AgnosticTargeted ||
           f == AttackFamily::DBA;
}

AdversaryView::AdversaryView(const ThreatModel& tm, int n, const ParamVector& w,
                             const std::vector<ParamVector>& malicious_clean,
                             const std::vector<ParamVector>* benign_updates, const AggregatorSpec* agr)
    : tm_(tm), n_(n), w_(w), mal_clean_(malicious_clean), benign_(benign_updates), agr_(agr) {}

const std::vector<ParamVector>& AdversaryView::benign_updates() const {
    if (!tm_.gradients_known || !benign_) throw KnowledgeViolation("benign updates are not visible to this adversary");
    ++benign_reads_;
    return *benign_;
}

const AggregatorSpec& AdversaryView::aggregator() const {
    if (!tm_.agr_tailored || !agr_) throw KnowledgeViolation("aggregator settings are not visible to this adversary");
    ++agr_reads_;
    return *agr_;
}

const std::vector<ParamVector>& visible_gradients(const AdversaryView& view) {
    return view.threat().gradients_known ? view.benign_updates() : view.malicious_clean();
}

ParamVector build_reference(const AdversaryView& view) { return mean(visible_gradients(view)); }

std::vector<ParamVector> model_replacement_gradients(const ParamVector& x, const ParamVector& w, int n, int f,
                                                     double eta) {
    if (!(eta > 0.0) || f < 1) throw std::invalid_argument("model replacement needs eta > 0 and f >= 1");
    ParamVector g = scale(sub(w, x), static_cast<double>(n) / (f * eta));
    return std::vector<ParamVector>(f, g);
}

ParamVector target_model(const Mlp& model, const ParamVector& w, const Dataset& pooled_poisoned,
                         const TrainConfig& cfg, std::uint64_t seed) {
    TrainConfig one = cfg;
    one.local_epochs = 1;
    ParamVector g = local_train(model, w, pooled_poisoned, one, seed);
    const double steps = std::ceil(static_cast<double>(pooled_poisoned.size()) / cfg.batch_size);
    ParamVector x = w;
    axpy(-cfg.client_lr * steps, g, x);
    return x;
}

namespace {

SolverSettings checked(SolverSettings s) {
    if (!(s.eps > 0.0) || !(s.gamma_init > s.eps)) throw std::invalid_argument("bad gamma solver settings");
    return s;
}

// Minimal gamma in [0, 1]; gamma 0 is tried first, the interpolation end
// gamma = 1 is the infeasible fallback.
CraftResult minimize_gamma(const FeasibilityOracle& oracle, const SolverSettings& s) {
    CraftResult r;
    r.oracle_calls = 1;
    if (oracle(0.0)) {
        r.gamma = 0.0;
        return r;
    }
    GammaResult g = solve_gamma_iterative(oracle, GammaDirection::Minimize, s.gamma_init, s.eps);
    r.oracle_calls += g.oracle_calls;
    if (g.feasible && g.gamma <= 1.0) {
        r.gamma = g.gamma;
    } else {
        r.gamma = 1.0;
        r.feasible = g.feasible;
    }
    return r;
}

ParamVector interpolate(const ParamVector& from, const ParamVector& to, double gamma) {
    ParamVector r = from;
    for (std::size_t k = 0; k < r.size(); ++k) r[k] += gamma * (to[k] - from[k]);
    return r;
}

}  // namespace

ParamVector flame_rotate(const ParamVector& g_p, const ParamVector& g_b, double gamma) {
    ParamVector u = interpolate(g_p, g_b, gamma);
    double nu = l2_norm(u);
    if (nu == 0.0) return u;
    return scale(u, l2_norm(g_p) / nu);
}

double flame_pgd_radius(const std::vector<ParamVector>& visible, const ParamVector& w, FlameClipMode mode) {
    double q = median(flame_clip_reference(visible, w, mode));
    if (mode == FlameClipMode::UpdateNorm) return q;
    return std::abs(q - l2_norm(w));
}

CraftResult flame_tailored_attack(const std::vector<ParamVector>& g_p, const ParamVector& g_b,
                                  const std::vector<ParamVector>& visible, double radius, const SolverSettings& s0) {
    const SolverSettings s = checked(s0);
    if (visible.size() < 2) throw std::invalid_argument("flame attack needs at least two visible gradients");
    std::vector<ParamVector> proj;
    for (const auto& g : g_p) proj.push_back(radius > 0.0 ? clip_by_norm(g, radius) : zeros(g.size()));
    const double bound = max_pairwise_cosine_distance(visible);

    auto build = [&](double gamma) {
        std::vector<ParamVector> out;
        for (const auto& g : proj) out.push_back(l2_norm(g) > 0.0 ? flame_rotate(g, g_b, gamma) : g);
        return out;
    };
    auto oracle = [&](double gamma) {
        for (const auto& gc : build(gamma)) {
            if (l2_norm(gc) == 0.0) return false;
            for (const auto& gj : visible)
                if (cosine_distance(gc, gj) > bound) return false;
        }
        return true;
    };
    CraftResult r = minimize_gamma(oracle, s);
    r.updates = build(r.gamma);
    return r;
}

CraftResult mdam_tailored_attack(const std::vector<ParamVector>& m_p, const ParamVector& m_b,
                                 const std::vector<ParamVector>& benign_momenta, int n, int f,
                                 const SolverSettings& s0) {
    const SolverSettings s = checked(s0);
    if (m_p.empty() || benign_momenta.empty()) throw std::invalid_argument("mdam attack needs momenta");
    const double c = max_pairwise_distance(benign_momenta);
    const int need = std::min<int>(n - 2 * f, static_cast<int>(benign_momenta.size()));

    auto within = [&](const ParamVector& mc) {
        int cnt = 0;
        for (const auto& mj : benign_momenta) cnt += distance(mc, mj) <= c;
        return cnt >= need;
    };

    CraftResult best;
    best.feasible = false;
    for (const auto& mp : m_p) {
        CraftResult r;
        if (s.kind == GammaSolverKind::Analytic) {
            ParamVector dir = sub(m_b, mp);
            double A = dot(dir, dir);
            std::optional<double> g;
            if (A > 0.0) {
                std::vector<Interval> ivs;
                for (const auto& mj : benign_momenta) {
                    ParamVector u = sub(mp, mj);
                    auto iv = quadratic_le_zero(A, 2.0 * dot(u, dir), dot(u, u) - c * c);
                    if (iv) ivs.push_back(*iv);
                }
                g = min_gamma_covered(ivs, need);
            } else if (within(mp)) {
                g = 0.0;
            }
            r.oracle_calls = 0;
            if (g && *g <= 1.0) {
                r.gamma = *g;
            } else {
                r.gamma = 1.0;
                r.feasible = within(interpolate(mp, m_b, 1.0));
            }
        } else {
            r = minimize_gamma([&](double gamma) { return within(interpolate(mp, m_b, gamma)); }, s);
        }
        bool better = !best.updates.size() || (r.feasible && !best.feasible) ||
                      (r.feasible == best.feasible && r.gamma < best.gamma);
        if (better) {
            best.gamma = r.gamma;
            best.feasible = r.feasible;
            best.updates.assign(f, interpolate(mp, m_b, r.gamma));
        }
        best.oracle_calls += r.oracle_calls;
    }
    return best;
}

CraftResult agnostic_targeted_attack(const std::vector<ParamVector>& g_p, const ParamVector& g_b,
                                     const std::vector<ParamVector>& visible, const SolverSettings& s0) {
    const SolverSettings s = checked(s0);
    if (visible.empty()) throw std::invalid_argument("agnostic attack needs visible gradients");
    const double c = max_pairwise_distance(visible);
    CraftResult r;
    if (s.kind == GammaSolverKind::Analytic) {
        double lo = 0.0;
        bool ok = true;
        for (const auto& gp : g_p) {
            AnalyticResult a = solve_gamma_analytic(gp, g_b, visible, c);
            ok = ok && a.feasible;
            lo = std::max(lo, a.gamma);
        }
        // the shared gamma must sit inside every per-gradient window
        if (ok)
            for (const auto& gp : g_p) {
                ParamVector gc = interpolate(gp, g_b, lo);
                for (const auto& gj : visible)
                    if (distance(gc, gj) > c * (1.0 + 1e-12)) ok = false;
            }
        r.gamma = ok && lo <= 1.0 ? lo : 1.0;
        r.feasible = ok;
    } else {
        auto oracle = [&](double gamma) {
            for (const auto& gp : g_p) {
                ParamVector gc = interpolate(gp, g_b, gamma);
                for (const auto& gj : visible)
                    if (distance(gc, gj) > c) return false;
            }
            return true;
        };
        r = minimize_gamma(oracle, s);
    }
    for (const auto& gp : g_p) r.updates.push_back(interpolate(gp, g_b, r.gamma));
    return r;
}

CraftResult cc_tailored_attack(const ParamVector& g_b, double atk_tau, int f, const SolverSettings& s0) {
    const SolverSettings s = checked(s0);
    if (!(atk_tau > 0.0)) throw std::invalid_argument("atk_tau must be positive");
    const ParamVector p = scale(sign(g_b), -1.0);
    auto build = [&](double gamma) {
        ParamVector gc = g_b;
        axpy(gamma, p, gc);
        return gc;
    };
    CraftResult r;
    if (l2_norm(g_b) > atk_tau) {
        r.gamma = 0.0;
        r.feasible = false;
    } else if (s.kind == GammaSolverKind::Analytic) {
        double A = dot(p, p);
        if (A > 0.0) {
            auto iv = quadratic_le_zero(A, 2.0 * dot(g_b, p), dot(g_b, g_b) - atk_tau * atk_tau);
            r.gamma = iv ? std::max(0.0, iv->hi) : 0.0;
            // guard the rounding of the root so the norm bound holds exactly
            while (r.gamma > 0.0 && l2_norm(build(r.gamma)) > atk_tau) r.gamma = std::nextafter(r.gamma, 0.0);
        } else {
            r.gamma = 0.0;
        }
    } else {
        GammaResult g = solve_gamma_iterative([&](double gamma) { return l2_norm(build(gamma)) <= atk_tau; },
                                              GammaDirection::Maximize, s.gamma_init, s.eps);
        r.oracle_calls = g.oracle_calls;
        r.gamma = g.feasible ? g.gamma : 0.0;
    }
    r.updates.assign(f, build(r.gamma));
    return r;
}

double lie_z(int n, int f) {
    const int s = n / 2 + 1 - f;
    if (f < 1 || s < 1 || n - f < 1) throw std::invalid_argument("lie: need f >= 1 and floor(n/2+1) - f >= 1");
    const double ratio = static_cast<double>(n - f - s) / (n - f);
    return normal_quantile(ratio);
}

CraftResult lie_attack(const std::vector<ParamVector>& benign, int n, int f) {
    if (benign.empty()) throw std::invalid_argument("lie needs benign statistics");
    const double z = lie_z(n, f);
    ParamVector mu = mean(benign);
    ParamVector sd = zeros(mu.size());
    for (const auto& g : benign)
        for (std::size_t k = 0; k < mu.size(); ++k) sd[k] += (g[k] - mu[k]) * (g[k] - mu[k]);
    for (double& v : sd) v = std::sqrt(v / benign.size());
    CraftResult r;
    r.gamma = z;
    ParamVector gc = mu;
    axpy(z, sd, gc);
    r.updates.assign(f, gc);
    return r;
}

CraftResult fang_attack(const ParamVector& mu, int f, double gamma_init, double eps,
                        const std::function<bool(const ParamVector&)>& damaging) {
    if (!(eps > 0.0) || !(gamma_init > 0.0)) throw std::invalid_argument("fang needs gamma_init, eps > 0");
    const ParamVector p = scale(sign(mu), -1.0);
    CraftResult r;
    r.feasible = false;
    double gamma = gamma_init;
    ParamVector gc = mu;
    while (gamma > eps) {
        gc = mu;
        axpy(gamma, p, gc);
        ++r.oracle_calls;
        r.gamma = gamma;
        if (damaging(gc)) {
            r.feasible = true;
            break;
        }
        gamma /= 2.0;
    }
    if (r.oracle_calls == 0) r.gamma = gamma;
    r.updates.assign(f, gc);
    return r;
}

std::vector<ParamVector> sign_flip(const std::vector<ParamVector>& honest) {
    std::vector<ParamVector> out;
    for (const auto& g : honest) out.push_back(scale(g, -1.0));
    return out;
}

int dba_local_index(int adversary, int n_local) {
    if (n_local < 1) throw std::invalid_argument("n_local must be >= 1");
    return adversary % n_local;
}

}  // namespace fedpoison
