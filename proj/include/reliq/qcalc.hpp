#pragma once

#include <Eigen/Dense>
#include <complex>
#include <optional>

// Quantum-state arithmetic for the repeater simulator: Werner states,
// depolarizing channels, swap-output fidelity (closed form plus a full
// density-matrix oracle), stretched-exponential memory decay and
// entanglement distillation. All functions are pure and thread-safe.
namespace reliq::qcalc {

using Complex = std::complex<double>;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;

// Tolerances shared by the whole module.
inline constexpr double kAlgebraTol = 1e-12;   // Hermiticity / trace identities
inline constexpr double kPsdTol = 1e-10;       // eigenvalue floor
inline constexpr double kOracleTol = 1e-9;     // closed form vs oracle

inline constexpr double kBaselineFidelity = 0.5;  // F_B
inline constexpr double kStretchExponent = 2.2;   // k
inline constexpr double kT2Base = 0.042;          // seconds at n_dec = 1

struct DomainError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Density operator over m qubits (dim = 2^m). The checked constructor
// enforces Hermiticity, unit trace and positive semidefiniteness.
class DensityMatrix {
  public:
    explicit DensityMatrix(CMatrix entries);

    [[nodiscard]] int dim() const { return static_cast<int>(entries_.rows()); }
    [[nodiscard]] const CMatrix& entries() const { return entries_; }

  private:
    CMatrix entries_;
};

struct DecayParams {
    double f0 = 0.95;        // initial fidelity, in (0.5, 1]
    int n_dec = 1024;        // decoupling pulse count, >= 1
    double beta = 2.0 / 3.0; // T2 scaling exponent
    double t2_base = kT2Base;
};

struct GateProfile {
    double f_gate = 1.0;
};

// The four Bell states as vectors in the |q1 q0> computational basis.
CVector bell_phi_plus();
CVector bell_phi_minus();
CVector bell_psi_plus();
CVector bell_psi_minus();

// Werner state W_F = F|Phi+><Phi+| + (1-F)/3 (other three Bell projectors).
DensityMatrix werner_density(double fidelity);

// <psi|rho|psi> for a normalized pure state.
double fidelity_to_pure(const DensityMatrix& rho, const CVector& psi);

// Uhlmann fidelity (Tr sqrt(sqrt(rho) sigma sqrt(rho)))^2 via
// eigendecomposition. General form; reduces to fidelity_to_pure when
// sigma is pure.
double uhlmann_fidelity(const DensityMatrix& rho, const DensityMatrix& sigma);

// lambda = (1 - f) * 2^m / (2^m - 1); for two qubits lambda = 4(1-f)/3.
double lambda_from_fidelity(double f, int qubits);

// (1 - lambda) rho + lambda Tr[rho] I / 2^m.
DensityMatrix apply_depolarization(const DensityMatrix& rho, double lambda);

// Full 16x16 circuit model of one entanglement swap: two ideal Bell pairs,
// per-pair depolarization with lambda_i = lambda_from_fidelity(f_i, 2),
// outcome-averaged Bell-state measurement with Pauli corrections, gate
// noise rho_f = f_gate rho_AB + (1 - f_gate) I/4, output fidelity to
// |Phi+>.
double swap_fidelity_oracle(double f1, double f2, double f_gate);

// Werner closed form of the same quantity:
//   F = f_gate (1/4 + (4 f1 - 1)(4 f2 - 1) / 12) + (1 - f_gate) / 4
// Hot-path replacement for the oracle; the two must agree within
// kOracleTol.
double swap_fidelity_closed(double f1, double f2, double f_gate);

// T_{2,n_dec} = t2_base * n_dec^beta.
double t2_from_pulses(int n_dec, double beta = 2.0 / 3.0,
                      double t2_base = kT2Base);

// F(t) = (F0 - F_B) exp[-(t / T2)^k] + F_B.
double decay_fidelity(const DecayParams& params, double t_seconds);

// Largest n such that folding f_init through n sequential swaps keeps the
// fidelity above `threshold`. nullopt means unbounded (the iteration's
// fixed point stays above the threshold).
std::optional<int> max_sequential_swaps(double f_init, double f_gate,
                                        double threshold = 0.5);

struct DistillResult {
    double f_out;
    double p_success;
};

// BBPSSW-style recurrence on two Werner pairs. Both inputs must exceed
// the distillable floor of 0.5.
DistillResult distill_pair(double f1, double f2);

}  // namespace reliq::qcalc
