#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "fedpoison/aggregators.hpp"
#include "fedpoison/data.hpp"
#include "fedpoison/gamma_solver.hpp"
#include "fedpoison/mlp.hpp"
#include "fedpoison/param_vector.hpp"

namespace fedpoison {

enum class AttackFamily {
    None,
    FlameTailored,
    MdamTailored,
    AgnosticTargeted,
    CCTailored,
    LIE,
    Fang,
    DBA,
    SignFlip,
    LabelFlip,
    ClassBias,
    NaiveFixed,  // one random vector submitted every round
    NaiveRandom  // fresh random direction of fixed norm every round
};

std::string to_string(AttackFamily f);
AttackFamily attack_family_from_string(const std::string& s);
bool is_targeted(AttackFamily f);

enum class GammaSolverKind { Iterative, Analytic };

struct ThreatModel {
    int f = 0;
    bool agr_tailored = true;
    bool gradients_known = true;
    AttackFamily family = AttackFamily::None;
    double atk_tau = 10.0;
    double gamma_init = 1.0;  // targeted families
    double gamma_eps = 1e-3;
    double cc_gamma_init = 10.0;
    double fang_gamma_init = 10.0;
    double fang_eps = 1e-3;
    double naive_norm = 1.0;
    int class_bias_source = -1;  // -1: every non-target class
    double class_bias_rate = 0.5;
    GammaSolverKind solver = GammaSolverKind::Iterative;
};

struct KnowledgeViolation : std::logic_error {
    using std::logic_error::logic_error;
};

// Capability object handed to the adversary. Benign updates and aggregator
// settings are only readable when the threat model grants them; every read is
// counted so tests can assert the information flow.
class AdversaryView {
public:
    AdversaryView(const ThreatModel& tm, int n, const ParamVector& w, const std::vector<ParamVector>& malicious_clean,
                  const std::vector<ParamVector>* benign_updates, const AggregatorSpec* agr);

    int n() const { return n_; }
    int f() const { return tm_.f; }
    const ThreatModel& threat() const { return tm_; }
    const ParamVector& global_model() const { return w_; }
    const std::vector<ParamVector>& malicious_clean() const { return mal_clean_; }

    const std::vector<ParamVector>& benign_updates() const;
    const AggregatorSpec& aggregator() const;

    int benign_reads() const { return benign_reads_; }
    int aggregator_reads() const { return agr_reads_; }

private:
    ThreatModel tm_;
    int n_;
    const ParamVector& w_;
    const std::vector<ParamVector>& mal_clean_;
    const std::vector<ParamVector>* benign_;
    const AggregatorSpec* agr_;
    mutable int benign_reads_ = 0;
    mutable int agr_reads_ = 0;
};

// Gradients visible to the adversary: benign updates when known, otherwise
// the malicious clients' own clean-data gradients.
const std::vector<ParamVector>& visible_gradients(const AdversaryView& view);
ParamVector build_reference(const AdversaryView& view);

struct CraftResult {
    std::vector<ParamVector> updates;
    double gamma = std::numeric_limits<double>::quiet_NaN();
    bool feasible = true;
    int oracle_calls = 0;
};

struct SolverSettings {
    GammaSolverKind kind = GammaSolverKind::Iterative;
    double gamma_init = 1.0;
    double eps = 1e-3;
};

// f copies of (n / (f eta)) (w - x): with n - f zero benign gradients, plain
// averaging and w <- w - eta * mean, the next global model is exactly x.
std::vector<ParamVector> model_replacement_gradients(const ParamVector& x, const ParamVector& w, int n, int f,
                                                     double eta);

// Global model after one epoch of SGD on the attackers' pooled poisoned data.
ParamVector target_model(const Mlp& model, const ParamVector& w, const Dataset& pooled_poisoned,
                         const TrainConfig& cfg, std::uint64_t seed);

// Rotation toward g_b, rescaled to the norm of g_p.
ParamVector flame_rotate(const ParamVector& g_p, const ParamVector& g_b, double gamma);

// Projects each g_p onto the ball of `radius`, then solves the minimal shared
// gamma whose rotated gradients keep every cosine distance to the visible set
// within the visible set's maximum pairwise cosine distance.
CraftResult flame_tailored_attack(const std::vector<ParamVector>& g_p, const ParamVector& g_b,
                                  const std::vector<ParamVector>& visible, double radius, const SolverSettings& s);

// PGD radius |q - ||w||| with q the median clipping reference over the visible set.
double flame_pgd_radius(const std::vector<ParamVector>& visible, const ParamVector& w, FlameClipMode mode);

// Minimal gamma such that some m_c = m_p + gamma (m_b - m_p) lies within the
// benign diameter of at least n - 2f benign momenta. All f outputs identical.
CraftResult mdam_tailored_attack(const std::vector<ParamVector>& m_p, const ParamVector& m_b,
                                 const std::vector<ParamVector>& benign_momenta, int n, int f, const SolverSettings& s);

// Minimal shared gamma with every ||g_c_i - g_j|| within the visible diameter.
CraftResult agnostic_targeted_attack(const std::vector<ParamVector>& g_p, const ParamVector& g_b,
                                     const std::vector<ParamVector>& visible, const SolverSettings& s);

// g_c = g_b - gamma sign(g_b), maximal gamma with ||g_c|| <= atk_tau.
CraftResult cc_tailored_attack(const ParamVector& g_b, double atk_tau, int f, const SolverSettings& s);

double lie_z(int n, int f);
CraftResult lie_attack(const std::vector<ParamVector>& benign, int n, int f);

// Halves gamma from gamma_init while gamma > eps until `damaging` accepts
// mu - gamma sign(mu). Falls back to the last probed gamma.
CraftResult fang_attack(const ParamVector& mu, int f, double gamma_init, double eps,
                        const std::function<bool(const ParamVector&)>& damaging);

std::vector<ParamVector> sign_flip(const std::vector<ParamVector>& honest);

// Local trigger index for DBA adversary j (0-based).
int dba_local_index(int adversary, int n_local);

}  // namespace fedpoison
