#pragma once

// Minimal statevector kernel: 2x2 complex gates, small multi-qubit registers
// and a batched single-qubit layout.
//
// Qubit ordering: qubit 0 is the most significant bit of the basis index, so
// on two qubits |q0 q1> has index 2*q0 + q1.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <complex>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "quirk/errors.hpp"

namespace quirk {

using Complex = std::complex<double>;

inline constexpr std::size_t kDefaultMaxQubits = 5;
inline constexpr std::size_t kHardMaxQubits = 12;
inline constexpr double kNormTolerance = 1e-10;

enum class GateKind { RX, RY, RZ };

inline const char* gate_name(GateKind kind) {
    switch (kind) {
    case GateKind::RX: return "RX";
    case GateKind::RY: return "RY";
    case GateKind::RZ: return "RZ";
    }
    return "?";
}

namespace detail {

// Plain complex product. std::complex's operator* adds an Inf/NaN recovery
// branch which we do not need on finite simulator data.
inline Complex cmul(const Complex& a, const Complex& b) noexcept {
    return {a.real() * b.real() - a.imag() * b.imag(), a.real() * b.imag() + a.imag() * b.real()};
}

inline void require_finite(double angle, const char* what) {
    if (!std::isfinite(angle)) throw InvalidInput(std::string(what) + ": angle must be finite");
}

} // namespace detail

/// 2x2 complex matrix, row-major.
struct Unitary2 {
    std::array<Complex, 4> m{Complex{1.0, 0.0}, Complex{}, Complex{}, Complex{1.0, 0.0}};

    static Unitary2 identity() { return {}; }

    const Complex& operator()(std::size_t row, std::size_t col) const { return m[2 * row + col]; }

    Unitary2 adjoint() const {
        return {{std::conj(m[0]), std::conj(m[2]), std::conj(m[1]), std::conj(m[3])}};
    }

    friend Unitary2 operator*(const Unitary2& a, const Unitary2& b) {
        using detail::cmul;
        return {{cmul(a.m[0], b.m[0]) + cmul(a.m[1], b.m[2]), cmul(a.m[0], b.m[1]) + cmul(a.m[1], b.m[3]),
                 cmul(a.m[2], b.m[0]) + cmul(a.m[3], b.m[2]), cmul(a.m[2], b.m[1]) + cmul(a.m[3], b.m[3])}};
    }

    /// Largest entrywise deviation of U * U^dagger from the identity.
    double unitarity_error() const {
        const Unitary2 p = *this * adjoint();
        double err = 0.0;
        for (std::size_t i = 0; i < 4; ++i) {
            const Complex target = (i == 0 || i == 3) ? Complex{1.0, 0.0} : Complex{};
            err = std::max(err, std::abs(p.m[i] - target));
        }
        return err;
    }
};

// The single hot kernel: (a0, a1) <- U (a0, a1). Every single-qubit code path
// goes through here, which keeps scalar and batched evaluation bitwise equal.
inline void apply_2x2(const Unitary2& u, Complex& a0, Complex& a1) noexcept {
    using detail::cmul;
    const Complex n0 = cmul(u.m[0], a0) + cmul(u.m[1], a1);
    const Complex n1 = cmul(u.m[2], a0) + cmul(u.m[3], a1);
    a0 = n0;
    a1 = n1;
}

inline Unitary2 rx(double angle) {
    detail::require_finite(angle, "rx");
    const double c = std::cos(0.5 * angle);
    const double s = std::sin(0.5 * angle);
    return {{Complex{c, 0.0}, Complex{0.0, -s}, Complex{0.0, -s}, Complex{c, 0.0}}};
}

inline Unitary2 ry(double angle) {
    detail::require_finite(angle, "ry");
    const double c = std::cos(0.5 * angle);
    const double s = std::sin(0.5 * angle);
    return {{Complex{c, 0.0}, Complex{-s, 0.0}, Complex{s, 0.0}, Complex{c, 0.0}}};
}

inline Unitary2 rz(double angle) {
    detail::require_finite(angle, "rz");
    const double c = std::cos(0.5 * angle);
    const double s = std::sin(0.5 * angle);
    return {{Complex{c, -s}, Complex{}, Complex{}, Complex{c, s}}};
}

inline Unitary2 rotation(GateKind kind, double angle) {
    switch (kind) {
    case GateKind::RX: return rx(angle);
    case GateKind::RY: return ry(angle);
    case GateKind::RZ: return rz(angle);
    }
    throw InvalidInput("unknown gate kind");
}

/// Pauli generator P of R_P(a) = exp(-i a P / 2).
inline Unitary2 pauli(GateKind kind) {
    switch (kind) {
    case GateKind::RX: return {{Complex{}, Complex{1.0, 0.0}, Complex{1.0, 0.0}, Complex{}}};
    case GateKind::RY: return {{Complex{}, Complex{0.0, -1.0}, Complex{0.0, 1.0}, Complex{}}};
    case GateKind::RZ: return {{Complex{1.0, 0.0}, Complex{}, Complex{}, Complex{-1.0, 0.0}}};
    }
    throw InvalidInput("unknown gate kind");
}

/// n-qubit pure state, 2^n amplitudes.
class QubitState {
public:
    explicit QubitState(std::size_t num_qubits = 1, std::size_t max_qubits = kDefaultMaxQubits)
        : num_qubits_(checked_qubits(num_qubits, max_qubits)), amplitudes_(std::size_t{1} << num_qubits_) {
        amplitudes_[0] = Complex{1.0, 0.0};
    }

    static QubitState basis(std::size_t num_qubits, std::size_t index, std::size_t max_qubits = kDefaultMaxQubits) {
        QubitState s(num_qubits, max_qubits);
        if (index >= s.size()) throw IndexError("basis index out of range");
        s.amplitudes_[0] = Complex{};
        s.amplitudes_[index] = Complex{1.0, 0.0};
        return s;
    }

    static QubitState from_amplitudes(std::vector<Complex> amplitudes, std::size_t max_qubits = kDefaultMaxQubits) {
        if (amplitudes.size() < 2 || !std::has_single_bit(amplitudes.size()))
            throw ShapeError("amplitude count must be a power of two, at least 2");
        QubitState s(static_cast<std::size_t>(std::countr_zero(amplitudes.size())), max_qubits);
        for (const auto& a : amplitudes)
            if (!std::isfinite(a.real()) || !std::isfinite(a.imag())) throw InvalidInput("non-finite amplitude");
        s.amplitudes_ = std::move(amplitudes);
        if (std::abs(s.norm() - 1.0) > kNormTolerance) throw InvalidInput("state is not normalised");
        return s;
    }

    std::size_t num_qubits() const noexcept { return num_qubits_; }
    std::size_t size() const noexcept { return amplitudes_.size(); }
    std::span<const Complex> amplitudes() const noexcept { return amplitudes_; }
    const Complex& operator[](std::size_t i) const { return amplitudes_[i]; }

    double norm() const {
        double acc = 0.0;
        for (const auto& a : amplitudes_) acc += std::norm(a);
        return std::sqrt(acc);
    }

    void apply(const Unitary2& gate, std::size_t target) {
        check_qubit(target);
        if (num_qubits_ == 1) {
            apply_2x2(gate, amplitudes_[0], amplitudes_[1]);
            return;
        }
        const std::size_t stride = bit(target);
        for (std::size_t base = 0; base < amplitudes_.size(); base += 2 * stride)
            for (std::size_t i = base; i < base + stride; ++i) apply_2x2(gate, amplitudes_[i], amplitudes_[i + stride]);
    }

    void cnot(std::size_t control, std::size_t target) {
        check_qubit(control);
        check_qubit(target);
        if (control == target) throw InvalidInput("cnot: control and target must differ");
        const std::size_t cbit = bit(control);
        const std::size_t tbit = bit(target);
        for (std::size_t i = 0; i < amplitudes_.size(); ++i)
            if ((i & cbit) && !(i & tbit)) std::swap(amplitudes_[i], amplitudes_[i | tbit]);
    }

    double expectation_z(std::size_t qubit) const {
        check_qubit(qubit);
        const std::size_t b = bit(qubit);
        double acc = 0.0;
        for (std::size_t i = 0; i < amplitudes_.size(); ++i) acc += (i & b) ? -std::norm(amplitudes_[i]) : std::norm(amplitudes_[i]);
        return std::clamp(acc, -1.0, 1.0);
    }

    /// <this|other>
    Complex inner(const QubitState& other) const {
        if (other.size() != size()) throw ShapeError("inner product of states with different qubit counts");
        Complex acc{};
        for (std::size_t i = 0; i < amplitudes_.size(); ++i) acc += detail::cmul(std::conj(amplitudes_[i]), other.amplitudes_[i]);
        return acc;
    }

    /// Multiplies the amplitudes of basis states with `qubit` = 1 by -1 (applies Z).
    void apply_z(std::size_t qubit) {
        check_qubit(qubit);
        const std::size_t b = bit(qubit);
        for (std::size_t i = 0; i < amplitudes_.size(); ++i)
            if (i & b) amplitudes_[i] = -amplitudes_[i];
    }

private:
    static std::size_t checked_qubits(std::size_t n, std::size_t max_qubits) {
        if (max_qubits > kHardMaxQubits)
            throw CapacityError("max_qubits " + std::to_string(max_qubits) + " exceeds hard cap " + std::to_string(kHardMaxQubits));
        if (n == 0) throw InvalidInput("a state needs at least one qubit");
        if (n > max_qubits)
            throw CapacityError("requested " + std::to_string(n) + " qubits, capacity is " + std::to_string(max_qubits));
        return n;
    }

    void check_qubit(std::size_t q) const {
        if (q >= num_qubits_)
            throw IndexError("qubit index " + std::to_string(q) + " out of range for " + std::to_string(num_qubits_) + " qubits");
    }

    std::size_t bit(std::size_t q) const noexcept { return std::size_t{1} << (num_qubits_ - 1 - q); }

    std::size_t num_qubits_;
    std::vector<Complex> amplitudes_;
};

inline QubitState apply(QubitState state, const Unitary2& gate, std::size_t target) {
    state.apply(gate, target);
    return state;
}

inline QubitState cnot(QubitState state, std::size_t control, std::size_t target) {
    state.cnot(control, target);
    return state;
}

inline double expectation_z(const QubitState& state, std::size_t qubit) { return state.expectation_z(qubit); }

/// B independent single-qubit states stored as a B x 2 complex array.
class QubitBatch {
public:
    explicit QubitBatch(std::size_t batch) : amps_(2 * batch) {
        for (std::size_t b = 0; b < batch; ++b) amps_[2 * b] = Complex{1.0, 0.0};
    }

    std::size_t size() const noexcept { return amps_.size() / 2; }
    Complex amplitude(std::size_t b, std::size_t i) const { return amps_[2 * b + i]; }

    void apply(const Unitary2& gate) {
        for (std::size_t b = 0; b < size(); ++b) apply_2x2(gate, amps_[2 * b], amps_[2 * b + 1]);
    }

    /// Element b receives gates[b].
    void apply_each(std::span<const Unitary2> gates) {
        if (gates.size() != size()) throw ShapeError("apply_each: one gate per batch element required");
        for (std::size_t b = 0; b < size(); ++b) apply_2x2(gates[b], amps_[2 * b], amps_[2 * b + 1]);
    }

    std::vector<double> expectation_z() const {
        std::vector<double> out(size());
        for (std::size_t b = 0; b < size(); ++b)
            out[b] = std::clamp(std::norm(amps_[2 * b]) - std::norm(amps_[2 * b + 1]), -1.0, 1.0);
        return out;
    }

private:
    std::vector<Complex> amps_;
};

} // namespace quirk
