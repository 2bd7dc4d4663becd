#include "reliq/qcalc.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <stdexcept>
#include <unsupported/Eigen/KroneckerProduct>

namespace reliq::qcalc {

namespace {

bool is_power_of_two(int n) { return n > 0 && (n & (n - 1)) == 0; }

CMatrix pauli_x() {
    CMatrix m(2, 2);
    m << 0, 1, 1, 0;
    return m;
}

CMatrix pauli_z() {
    CMatrix m(2, 2);
    m << 1, 0, 0, -1;
    return m;
}

CVector make_bell(int i0, int i1, double sign) {
    CVector v = CVector::Zero(4);
    const double s = 1.0 / std::sqrt(2.0);
    v(i0) = s;
    v(i1) = sign * s;
    return v;
}

// Trace out the two middle qubits of a 4-qubit state ordered |a c0 c1 b>.
CMatrix trace_out_middle(const CMatrix& rho16) {
    CMatrix out = CMatrix::Zero(4, 4);
    for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b)
            for (int ap = 0; ap < 2; ++ap)
                for (int bp = 0; bp < 2; ++bp) {
                    Complex acc = 0;
                    for (int c0 = 0; c0 < 2; ++c0)
                        for (int c1 = 0; c1 < 2; ++c1) {
                            const int row = a * 8 + c0 * 4 + c1 * 2 + b;
                            const int col = ap * 8 + c0 * 4 + c1 * 2 + bp;
                            acc += rho16(row, col);
                        }
                    out(a * 2 + b, ap * 2 + bp) = acc;
                }
    return out;
}

}  // namespace

DensityMatrix::DensityMatrix(CMatrix entries) : entries_(std::move(entries)) {
    if (entries_.rows() != entries_.cols() ||
        !is_power_of_two(static_cast<int>(entries_.rows()))) {
        throw ShapeError("density matrix must be square with power-of-two dim");
    }
    const double herm_err =
        (entries_ - entries_.adjoint()).cwiseAbs().maxCoeff();
    if (herm_err > kAlgebraTol) {
        throw DomainError("density matrix is not Hermitian");
    }
    if (std::abs(entries_.trace().real() - 1.0) > kAlgebraTol ||
        std::abs(entries_.trace().imag()) > kAlgebraTol) {
        throw DomainError("density matrix trace is not 1");
    }
    Eigen::SelfAdjointEigenSolver<CMatrix> es(entries_,
                                              Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < -kPsdTol) {
        throw DomainError("density matrix is not positive semidefinite");
    }
}

CVector bell_phi_plus() { return make_bell(0, 3, 1.0); }
CVector bell_phi_minus() { return make_bell(0, 3, -1.0); }
CVector bell_psi_plus() { return make_bell(1, 2, 1.0); }
CVector bell_psi_minus() { return make_bell(1, 2, -1.0); }

DensityMatrix werner_density(double fidelity) {
    if (fidelity < 0.25 - kAlgebraTol || fidelity > 1.0 + kAlgebraTol) {
        throw DomainError("werner fidelity must lie in [0.25, 1]");
    }
    const CVector phip = bell_phi_plus();
    const CVector phim = bell_phi_minus();
    const CVector psip = bell_psi_plus();
    const CVector psim = bell_psi_minus();
    CMatrix rho = fidelity * (phip * phip.adjoint());
    const double w = (1.0 - fidelity) / 3.0;
    rho += w * (phim * phim.adjoint());
    rho += w * (psip * psip.adjoint());
    rho += w * (psim * psim.adjoint());
    return DensityMatrix(rho);
}

double fidelity_to_pure(const DensityMatrix& rho, const CVector& psi) {
    if (psi.size() != rho.dim()) {
        throw ShapeError("state vector dimension does not match density matrix");
    }
    return (psi.adjoint() * rho.entries() * psi)(0, 0).real();
}

double uhlmann_fidelity(const DensityMatrix& rho, const DensityMatrix& sigma) {
    if (rho.dim() != sigma.dim()) {
        throw ShapeError("density matrix dimensions do not match");
    }
    Eigen::SelfAdjointEigenSolver<CMatrix> es(rho.entries());
    const Eigen::VectorXd evals = es.eigenvalues().cwiseMax(0.0);
    const CMatrix sqrt_rho = es.eigenvectors() *
                             evals.cwiseSqrt().asDiagonal() *
                             es.eigenvectors().adjoint();
    const CMatrix inner = sqrt_rho * sigma.entries() * sqrt_rho;
    Eigen::SelfAdjointEigenSolver<CMatrix> es2(inner, Eigen::EigenvaluesOnly);
    double sum = 0.0;
    for (int i = 0; i < es2.eigenvalues().size(); ++i) {
        sum += std::sqrt(std::max(0.0, es2.eigenvalues()(i)));
    }
    return sum * sum;
}

double lambda_from_fidelity(double f, int qubits) {
    const double dim = std::pow(2.0, qubits);
    const double f_min = 1.0 / dim;
    if (f > 1.0 + kAlgebraTol || f < f_min - kAlgebraTol) {
        throw DomainError("fidelity outside the depolarizable range");
    }
    const double lambda = (1.0 - f) * dim / (dim - 1.0);
    if (lambda < -kAlgebraTol || lambda > 1.0 + kAlgebraTol) {
        throw DomainError("derived depolarization parameter outside [0, 1]");
    }
    return std::clamp(lambda, 0.0, 1.0);
}

DensityMatrix apply_depolarization(const DensityMatrix& rho, double lambda) {
    if (lambda < 0.0 || lambda > 1.0) {
        throw DomainError("depolarization parameter must lie in [0, 1]");
    }
    const int d = rho.dim();
    const Complex tr = rho.entries().trace();
    CMatrix out = (1.0 - lambda) * rho.entries() +
                  (lambda / d) * tr * CMatrix::Identity(d, d);
    return DensityMatrix(std::move(out));
}

double swap_fidelity_oracle(double f1, double f2, double f_gate) {
    if (f_gate < 0.0 || f_gate > 1.0) {
        throw DomainError("gate fidelity must lie in [0, 1]");
    }
    // Qubit ordering |a c0 c1 b>: pair 1 spans (A, C0), pair 2 spans (C1, B).
    // Depolarizing an ideal pair with lambda_i yields the pair the circuit
    // feeds into the repeater.
    const DensityMatrix pair1 = apply_depolarization(
        DensityMatrix(bell_phi_plus() * bell_phi_plus().adjoint()),
        lambda_from_fidelity(f1, 2));
    const DensityMatrix pair2 = apply_depolarization(
        DensityMatrix(bell_phi_plus() * bell_phi_plus().adjoint()),
        lambda_from_fidelity(f2, 2));
    const CMatrix rho16 =
        Eigen::kroneckerProduct(pair1.entries(), pair2.entries());

    const CMatrix id2 = CMatrix::Identity(2, 2);
    const CMatrix id8 = CMatrix::Identity(8, 8);
    const CVector outcomes[4] = {bell_phi_plus(), bell_psi_plus(),
                                 bell_phi_minus(), bell_psi_minus()};
    const CMatrix corrections[4] = {id2, pauli_x(), pauli_z(),
                                    pauli_z() * pauli_x()};

    // Outcome-averaged post-measurement state on (A, B).
    CMatrix rho_ab = CMatrix::Zero(4, 4);
    for (int k = 0; k < 4; ++k) {
        const CMatrix bell_proj = outcomes[k] * outcomes[k].adjoint();
        const CMatrix projector = Eigen::kroneckerProduct(
            id2, Eigen::kroneckerProduct(bell_proj, id2).eval());
        const CMatrix projected = projector * rho16 * projector;
        const CMatrix correct = Eigen::kroneckerProduct(id8, corrections[k]);
        rho_ab += trace_out_middle(correct * projected * correct.adjoint());
    }
    const DensityMatrix swapped(rho_ab);

    // Gate noise on the repeater section (two-qubit depolarization with
    // weight 1 - f_gate).
    const DensityMatrix rho_f =
        apply_depolarization(swapped, 1.0 - f_gate);
    return fidelity_to_pure(rho_f, bell_phi_plus());
}

double swap_fidelity_closed(double f1, double f2, double f_gate) {
    if (f1 < 0.25 || f1 > 1.0 || f2 < 0.25 || f2 > 1.0 || f_gate < 0.0 ||
        f_gate > 1.0) {
        throw DomainError("swap inputs outside valid fidelity ranges");
    }
    return f_gate * (0.25 + (4.0 * f1 - 1.0) * (4.0 * f2 - 1.0) / 12.0) +
           (1.0 - f_gate) * 0.25;
}

double t2_from_pulses(int n_dec, double beta, double t2_base) {
    if (n_dec < 1) {
        throw DomainError("decoupling pulse count must be >= 1");
    }
    return t2_base * std::pow(static_cast<double>(n_dec), beta);
}

double decay_fidelity(const DecayParams& params, double t_seconds) {
    const double t2 = t2_from_pulses(params.n_dec, params.beta, params.t2_base);
    const double stretched = std::exp(
        -std::pow(t_seconds / t2, kStretchExponent));
    return (params.f0 - kBaselineFidelity) * stretched + kBaselineFidelity;
}

std::optional<int> max_sequential_swaps(double f_init, double f_gate,
                                        double threshold) {
    // Each swap is the affine map F -> a F + b; the iteration is monotone,
    // so boundedness is decided by the first iterate and the fixed point.
    const double a = f_gate * (4.0 * f_init - 1.0) / 3.0;
    const double b = swap_fidelity_closed(0.0 + 0.25, f_init, f_gate) -
                     a * 0.25;
    const double first = a * f_init + b;
    if (a >= 1.0) {
        return first > threshold ? std::nullopt : std::optional<int>(0);
    }
    const double fixed_point = b / (1.0 - a);
    if (first > threshold && fixed_point > threshold) {
        return std::nullopt;
    }
    int n = 0;
    double f = f_init;
    while (true) {
        f = a * f + b;
        if (f <= threshold) return n;
        ++n;
    }
}

DistillResult distill_pair(double f1, double f2) {
    if (f1 <= 0.5 || f2 <= 0.5 || f1 > 1.0 || f2 > 1.0) {
        throw DomainError("distillation requires fidelities in (0.5, 1]");
    }
    const double p = f1 * f2 + f1 * (1.0 - f2) / 3.0 + f2 * (1.0 - f1) / 3.0 +
                     5.0 * (1.0 - f1) * (1.0 - f2) / 9.0;
    const double f_out = (f1 * f2 + (1.0 - f1) * (1.0 - f2) / 9.0) / p;
    return {f_out, p};
}

}  // namespace reliq::qcalc
