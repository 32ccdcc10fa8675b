#pragma once

// =============================================================================
// Generic split ODE stepping
// =============================================================================
//     dz/dt = A z + S(t) + F(t, z)
// with A handled implicitly and F explicitly. The same four schemes are used
// by the circuit engine (see solvers.hpp), which specialises them for the
// block structure z = [x_l; psi]; this header serves the scalar test equation,
// the smooth accuracy benchmarks and any other small problem.
// =============================================================================

#include "imexsim/errors.hpp"
#include "imexsim/linalg.hpp"

#include <cmath>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace imexsim {

enum class Method {
    Imex,          ///< two-stage half-step implicit-explicit scheme
    Latency,       ///< backward Euler on A, explicit F lagged by one step
    ForwardEuler,
    Trapezoidal,   ///< fully implicit trapezoidal rule solved by Newton
};

[[nodiscard]] std::string_view to_string(Method method);
/// Accepts imex, latency, forward-euler (fe), trapezoidal-oracle (trapezoidal, trap).
[[nodiscard]] Method method_from_string(std::string_view text);

struct NewtonSettings {
    int max_iter = 50;
    Real tol = 1e-12;  ///< on ||delta||_inf / max(1, ||z||_inf)
};

namespace detail {
template <class Scalar>
Real inf_norm(const VectorX<Scalar>& v) {
    Real m = 0.0;
    for (Index i = 0; i < v.size(); ++i) {
        m = std::max(m, static_cast<Real>(std::abs(v(i))));
    }
    return m;
}
}  // namespace detail

template <class Scalar>
class SplitStepper {
public:
    using Vec = VectorX<Scalar>;
    using Mat = MatrixX<Scalar>;
    using ExplicitFn = std::function<void(Real t, const Vec& z, Vec& out)>;
    using JacobianFn = std::function<void(Real t, const Vec& z, Mat& out)>;
    using SourceFn = std::function<void(Real t, Vec& out)>;

    SplitStepper(Mat A, ExplicitFn F, JacobianFn dF = {}, SourceFn S = {})
        : A_(std::move(A)), F_(std::move(F)), dF_(std::move(dF)), S_(std::move(S)) {
        if (A_.rows() != A_.cols()) {
            throw DimensionError("split stepper: A must be square");
        }
    }

    [[nodiscard]] Index dim() const { return A_.rows(); }
    [[nodiscard]] Real step_size() const { return h_; }
    [[nodiscard]] int last_newton_iterations() const { return newton_iterations_; }
    void set_newton(NewtonSettings settings) { newton_ = settings; }

    void set_step(Real h) {
        if (!(h > 0.0)) {
            throw ConfigError("step size must be positive");
        }
        h_ = h;
        const Mat I = Mat::Identity(dim(), dim());
        half_lu_.compute(I - Scalar(h / 2) * A_);
        full_lu_.compute(I - Scalar(h) * A_);
    }

    void step(Method method, Real t, Vec& z) {
        if (h_ <= 0.0) {
            throw ConfigError("split stepper: call set_step first");
        }
        if (z.size() != dim()) {
            throw DimensionError("split stepper: state size mismatch");
        }
        const Real h = h_;
        switch (method) {
        case Method::Imex: {
            const Real th = t + h / 2;
            Vec s = source(th);
            Vec f0 = explicit_part(t, z);
            Vec zh = half_lu_.solve(z + Scalar(h / 2) * (s + f0));
            Vec fh = explicit_part(th, zh);
            z = z + Scalar(h) * (A_ * zh + s + fh);
            break;
        }
        case Method::Latency: {
            Vec f0 = explicit_part(t, z);
            z = full_lu_.solve(z + Scalar(h) * (source(t + h) + f0));
            break;
        }
        case Method::ForwardEuler: {
            Vec f0 = explicit_part(t, z);
            z = z + Scalar(h) * (A_ * z + source(t) + f0);
            break;
        }
        case Method::Trapezoidal:
            trapezoidal(t, z);
            break;
        }
    }

private:
    Vec source(Real t) const {
        Vec s = Vec::Zero(dim());
        if (S_) S_(t, s);
        return s;
    }

    Vec explicit_part(Real t, const Vec& z) const {
        Vec f = Vec::Zero(dim());
        if (F_) F_(t, z, f);
        return f;
    }

    Vec rhs(Real t, const Vec& z) const { return A_ * z + source(t) + explicit_part(t, z); }

    void trapezoidal(Real t, Vec& z) {
        const Real h = h_;
        const Vec base = z + Scalar(h / 2) * rhs(t, z);
        Vec w = z;
        std::vector<Real> history;
        Mat J(dim(), dim());
        const Mat I = Mat::Identity(dim(), dim());
        for (int it = 1; it <= newton_.max_iter; ++it) {
            const Vec residual = w - Scalar(h / 2) * rhs(t + h, w) - base;
            J = A_;
            if (dF_) {
                Mat dF = Mat::Zero(dim(), dim());
                dF_(t + h, w, dF);
                J += dF;
            }
            const Vec delta = (I - Scalar(h / 2) * J).partialPivLu().solve(-residual);
            w += delta;
            const Real size = detail::inf_norm(delta);
            history.push_back(size);
            if (!std::isfinite(size)) {
                break;
            }
            if (size <= newton_.tol * std::max<Real>(1.0, detail::inf_norm(w))) {
                newton_iterations_ = it;
                z = w;
                return;
            }
        }
        throw NewtonError("trapezoidal Newton iteration did not converge at t=" + std::to_string(t),
                          std::move(history));
    }

    Mat A_;
    ExplicitFn F_;
    JacobianFn dF_;
    SourceFn S_;
    NewtonSettings newton_;
    Real h_ = 0.0;
    Eigen::PartialPivLU<Mat> half_lu_;
    Eigen::PartialPivLU<Mat> full_lu_;
    int newton_iterations_ = 0;
};

}  // namespace imexsim
