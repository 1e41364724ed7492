#pragma once

// Data re-uploading (DR) activations.
//
// A DR circuit with L layers starts in |0> and repeats L times: encode the
// input x with a rotation, then apply a trainable unitary. The activation value
// is <Z> on the readout qubit, so it always lies in [-1, 1].
//
// Default layer: RY(x), RZ(theta[l][0]), RX(theta[l][1]) in application order.

#include <charconv>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "quirk/diagnostics.hpp"
#include "quirk/errors.hpp"
#include "quirk/qsim.hpp"
#include "quirk/random.hpp"

namespace quirk {

inline constexpr int kInputSource = -1;

/// One gate of a DR layer. `source` is kInputSource for the encoding gate,
/// otherwise the index of the trainable angle within the layer.
struct GateSlot {
    GateKind kind;
    int source;

    bool operator==(const GateSlot&) const = default;
};

/// Ordered gate list of one DR layer, in application order.
class GateTemplate {
public:
    GateTemplate() : slots_{{GateKind::RY, kInputSource}, {GateKind::RZ, 0}, {GateKind::RX, 1}} {}

    explicit GateTemplate(std::vector<GateSlot> slots) : slots_(std::move(slots)) { validate(); }

    /// RY(x) encode, then RZ, RX trainables: 2 angles per layer.
    static GateTemplate standard() { return {}; }

    /// RY(x) encode, then a full RZ RY RZ Euler rotation: 3 angles per layer.
    static GateTemplate euler() {
        return GateTemplate({{GateKind::RY, kInputSource}, {GateKind::RZ, 0}, {GateKind::RY, 1}, {GateKind::RZ, 2}});
    }

    /// Parses "RY:x,RZ:0,RX:1".
    static GateTemplate parse(std::string_view text) {
        std::vector<GateSlot> slots;
        while (!text.empty()) {
            const auto comma = text.find(',');
            const std::string_view item = text.substr(0, comma);
            text = comma == std::string_view::npos ? std::string_view{} : text.substr(comma + 1);
            const auto colon = item.find(':');
            if (colon == std::string_view::npos) throw ParseError("gate template entry '" + std::string(item) + "' lacks ':'");
            const std::string_view gate = item.substr(0, colon);
            const std::string_view src = item.substr(colon + 1);
            GateKind kind;
            if (gate == "RX") kind = GateKind::RX;
            else if (gate == "RY") kind = GateKind::RY;
            else if (gate == "RZ") kind = GateKind::RZ;
            else throw ParseError("unknown gate '" + std::string(gate) + "' in template");
            int source = kInputSource;
            if (src != "x") {
                auto [ptr, ec] = std::from_chars(src.data(), src.data() + src.size(), source);
                if (ec != std::errc{} || ptr != src.data() + src.size() || source < 0)
                    throw ParseError("bad gate source '" + std::string(src) + "' in template");
            }
            slots.push_back({kind, source});
        }
        try {
            return GateTemplate(std::move(slots));
        } catch (const InvalidInput& e) {
            throw ParseError(e.what());
        }
    }

    std::string to_string() const {
        std::string out;
        for (const auto& s : slots_) {
            if (!out.empty()) out += ',';
            out += gate_name(s.kind);
            out += ':';
            out += s.source == kInputSource ? std::string("x") : std::to_string(s.source);
        }
        return out;
    }

    std::span<const GateSlot> slots() const noexcept { return slots_; }
    std::size_t params_per_layer() const noexcept { return slots_.size() - 1; }
    GateKind encoding() const noexcept { return slots_.front().kind; }

    bool operator==(const GateTemplate&) const = default;

private:
    void validate() const {
        if (slots_.empty() || slots_.front().source != kInputSource)
            throw InvalidInput("gate template must start with the input encoding gate");
        std::vector<bool> seen(slots_.size() - 1, false);
        for (std::size_t i = 1; i < slots_.size(); ++i) {
            const int src = slots_[i].source;
            if (src < 0 || static_cast<std::size_t>(src) >= seen.size() || seen[src])
                throw InvalidInput("gate template parameter indices must be a permutation of 0..P-1");
            seen[src] = true;
        }
    }

    std::vector<GateSlot> slots_;
};

/// Trainable angles of one DR circuit. Layout of `thetas`:
/// index = (layer * num_qubits + qubit) * P + p.
struct DRParams {
    std::size_t num_layers = 1;
    std::size_t num_qubits = 1;
    bool entangle = false;
    GateTemplate gates;
    std::vector<double> thetas = std::vector<double>(2, 0.0);

    static DRParams zeros(std::size_t layers, std::size_t qubits = 1, bool entangle = false, GateTemplate gates = {}) {
        DRParams p;
        p.num_layers = layers;
        p.num_qubits = qubits;
        p.entangle = entangle;
        p.gates = std::move(gates);
        p.thetas.assign(layers * qubits * p.gates.params_per_layer(), 0.0);
        return p;
    }

    /// Angles drawn from Uniform(-pi, pi).
    static DRParams uniform(std::size_t layers, Rng& rng, std::size_t qubits = 1, bool entangle = false, GateTemplate gates = {}) {
        DRParams p = zeros(layers, qubits, entangle, std::move(gates));
        for (auto& t : p.thetas) t = rng.uniform(-std::numbers::pi, std::numbers::pi);
        return p;
    }

    std::size_t params_per_layer() const noexcept { return gates.params_per_layer(); }
    std::size_t size() const noexcept { return thetas.size(); }

    std::size_t index(std::size_t layer, std::size_t p, std::size_t qubit = 0) const noexcept {
        return (layer * num_qubits + qubit) * params_per_layer() + p;
    }
    double theta(std::size_t layer, std::size_t p, std::size_t qubit = 0) const { return thetas.at(index(layer, p, qubit)); }
    double& theta(std::size_t layer, std::size_t p, std::size_t qubit = 0) { return thetas.at(index(layer, p, qubit)); }

    void validate() const {
        if (num_layers == 0) throw InvalidInput("DR circuit needs at least one layer");
        if (num_qubits == 0) throw InvalidInput("DR circuit needs at least one qubit");
        if (thetas.size() != num_layers * num_qubits * params_per_layer())
            throw ShapeError("DR angle count " + std::to_string(thetas.size()) + " does not match L*n*P = " +
                             std::to_string(num_layers * num_qubits * params_per_layer()));
        for (double t : thetas)
            if (!std::isfinite(t)) throw InvalidInput("DR angle is not finite");
    }
};

enum class DomainPolicy {
    Clamp, ///< clamp x into [0, pi] and count a warning
    Raw,   ///< evaluate the circuit at x as given
};

struct DRGradient {
    double value = 0.0;
    std::vector<double> dtheta; ///< same layout as DRParams::thetas
    double dx = 0.0;
};

namespace detail {

inline void require_finite_input(double x) {
    if (!std::isfinite(x)) throw InvalidInput("DR input must be finite");
}

// Returns the (possibly clamped) input and whether clamping happened.
inline std::pair<double, bool> to_domain(double x, DomainPolicy policy) {
    if (policy == DomainPolicy::Raw || (x >= 0.0 && x <= std::numbers::pi)) return {x, false};
    diagnostics().clamped_dr_inputs.fetch_add(1, std::memory_order_relaxed);
    return {std::clamp(x, 0.0, std::numbers::pi), true};
}

// Product of the trainable gates of every layer for one qubit.
inline std::vector<Unitary2> layer_unitaries(const DRParams& params, std::size_t qubit = 0) {
    std::vector<Unitary2> out(params.num_layers);
    const auto slots = params.gates.slots();
    for (std::size_t l = 0; l < params.num_layers; ++l) {
        Unitary2 w;
        for (std::size_t s = 1; s < slots.size(); ++s)
            w = rotation(slots[s].kind, params.thetas[params.index(l, static_cast<std::size_t>(slots[s].source), qubit)]) * w;
        out[l] = w;
    }
    return out;
}

inline double single_qubit_value(const Unitary2& encode, std::span<const Unitary2> layers) {
    Complex a0{1.0, 0.0};
    Complex a1{};
    for (const auto& w : layers) {
        apply_2x2(encode, a0, a1);
        apply_2x2(w, a0, a1);
    }
    return std::clamp(std::norm(a0) - std::norm(a1), -1.0, 1.0);
}

// Im(<lambda| P |psi>) for a single qubit: the derivative of <Z> w.r.t. the
// angle of the rotation R_P whose output state is psi, given the adjoint
// state lambda at that point.
inline double generator_overlap(GateKind kind, const Complex& l0, const Complex& l1, const Complex& p0, const Complex& p1) {
    Complex v0;
    Complex v1;
    switch (kind) {
    case GateKind::RX: v0 = p1; v1 = p0; break;
    case GateKind::RY: v0 = Complex{p1.imag(), -p1.real()}; v1 = Complex{-p0.imag(), p0.real()}; break;
    case GateKind::RZ: v0 = p0; v1 = -p1; break;
    }
    return (cmul(std::conj(l0), v0) + cmul(std::conj(l1), v1)).imag();
}

struct MultiQubitOp {
    bool is_cnot = false;
    GateKind kind = GateKind::RY;
    std::size_t qubit = 0;   // rotation target, or CNOT control
    std::size_t target = 0;  // CNOT target
    int source = kInputSource;
    std::size_t theta_index = 0;
};

inline std::vector<MultiQubitOp> multiqubit_program(const DRParams& params) {
    std::vector<MultiQubitOp> ops;
    const auto slots = params.gates.slots();
    const std::size_t n = params.num_qubits;
    for (std::size_t l = 0; l < params.num_layers; ++l) {
        for (std::size_t q = 0; q < n; ++q) {
            for (const auto& slot : slots) {
                MultiQubitOp op;
                op.kind = slot.kind;
                op.qubit = q;
                op.source = slot.source;
                if (slot.source != kInputSource) op.theta_index = params.index(l, static_cast<std::size_t>(slot.source), q);
                ops.push_back(op);
            }
        }
        if (params.entangle && n > 1) {
            for (std::size_t q = 0; q < n; ++q) {
                MultiQubitOp op;
                op.is_cnot = true;
                op.qubit = q;
                op.target = (q + 1) % n;
                ops.push_back(op);
            }
        }
    }
    return ops;
}

inline Unitary2 op_unitary(const MultiQubitOp& op, const DRParams& params, double x) {
    return rotation(op.kind, op.source == kInputSource ? x : params.thetas[op.theta_index]);
}

inline double multiqubit_value(double x, const DRParams& params, std::size_t max_qubits) {
    QubitState state(params.num_qubits, max_qubits);
    for (const auto& op : multiqubit_program(params)) {
        if (op.is_cnot) state.cnot(op.qubit, op.target);
        else state.apply(op_unitary(op, params, x), op.qubit);
    }
    return state.expectation_z(0);
}

} // namespace detail

/// <Z> on qubit 0 of a DR circuit with two or more qubits. Each layer encodes x
/// on every qubit, applies per-qubit trainable gates, then (if entangle) a CNOT
/// ring 0->1, 1->2, ..., n-1->0.
inline double dr_forward_multiqubit(double x, const DRParams& params, std::size_t max_qubits = kDefaultMaxQubits,
                                    DomainPolicy policy = DomainPolicy::Clamp) {
    detail::require_finite_input(x);
    params.validate();
    if (params.num_qubits < 2) throw InvalidInput("dr_forward_multiqubit needs at least two qubits");
    if (params.num_qubits > max_qubits || max_qubits > kHardMaxQubits)
        throw CapacityError("DR circuit with " + std::to_string(params.num_qubits) + " qubits exceeds capacity " +
                            std::to_string(std::min(max_qubits, kHardMaxQubits)));
    return detail::multiqubit_value(detail::to_domain(x, policy).first, params, max_qubits);
}

inline double dr_forward(double x, const DRParams& params, DomainPolicy policy = DomainPolicy::Clamp) {
    detail::require_finite_input(x);
    params.validate();
    if (params.num_qubits > 1) return dr_forward_multiqubit(x, params, kDefaultMaxQubits, policy);
    const double xin = detail::to_domain(x, policy).first;
    const auto layers = detail::layer_unitaries(params);
    return detail::single_qubit_value(rotation(params.gates.encoding(), xin), layers);
}

/// Elementwise dr_forward over a batch; bitwise equal to the scalar path.
inline std::vector<double> dr_forward_batch(std::span<const double> xs, const DRParams& params,
                                            DomainPolicy policy = DomainPolicy::Clamp) {
    params.validate();
    for (double x : xs) detail::require_finite_input(x);
    if (xs.empty()) return {};
    if (params.num_qubits > 1) {
        std::vector<double> out(xs.size());
        for (std::size_t i = 0; i < xs.size(); ++i) out[i] = dr_forward_multiqubit(xs[i], params, kDefaultMaxQubits, policy);
        return out;
    }
    std::vector<Unitary2> encode(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) encode[i] = rotation(params.gates.encoding(), detail::to_domain(xs[i], policy).first);
    QubitBatch batch(xs.size());
    for (const auto& w : detail::layer_unitaries(params)) {
        batch.apply_each(encode);
        batch.apply(w);
    }
    return batch.expectation_z();
}

namespace detail {

inline DRGradient multiqubit_gradient(double x, const DRParams& params, std::size_t max_qubits) {
    const auto ops = multiqubit_program(params);
    QubitState psi(params.num_qubits, max_qubits);
    for (const auto& op : ops) {
        if (op.is_cnot) psi.cnot(op.qubit, op.target);
        else psi.apply(op_unitary(op, params, x), op.qubit);
    }
    DRGradient g;
    g.value = psi.expectation_z(0);
    g.dtheta.assign(params.thetas.size(), 0.0);

    QubitState lambda = psi;
    lambda.apply_z(0);
    for (std::size_t k = ops.size(); k-- > 0;) {
        const auto& op = ops[k];
        if (op.is_cnot) {
            lambda.cnot(op.qubit, op.target);
            psi.cnot(op.qubit, op.target);
            continue;
        }
        QubitState p_psi = psi;
        p_psi.apply(pauli(op.kind), op.qubit);
        const double d = lambda.inner(p_psi).imag();
        if (op.source == kInputSource) g.dx += d;
        else g.dtheta[op.theta_index] += d;
        const Unitary2 inv = op_unitary(op, params, x).adjoint();
        lambda.apply(inv, op.qubit);
        psi.apply(inv, op.qubit);
    }
    return g;
}

} // namespace detail

/// A DR circuit with its trainable gates precomputed, for evaluating many
/// inputs against fixed angles. Inputs must already lie in the encoding domain.
class DRKernel {
public:
    explicit DRKernel(const DRParams& params, std::size_t max_qubits = kDefaultMaxQubits)
        : params_(params), max_qubits_(max_qubits) {
        params_.validate();
        if (params_.num_qubits > std::min(max_qubits, kHardMaxQubits))
            throw CapacityError("DR circuit with " + std::to_string(params_.num_qubits) + " qubits exceeds capacity " +
                                std::to_string(std::min(max_qubits, kHardMaxQubits)));
        if (params_.num_qubits == 1) {
            layers_ = detail::layer_unitaries(params_);
            const auto slots = params_.gates.slots();
            for (std::size_t l = 0; l < params_.num_layers; ++l)
                for (std::size_t s = 1; s < slots.size(); ++s)
                    trainable_.push_back(
                        rotation(slots[s].kind, params_.thetas[params_.index(l, static_cast<std::size_t>(slots[s].source))]));
        }
    }

    const DRParams& params() const noexcept { return params_; }

    double value(double x) const {
        if (params_.num_qubits > 1) return detail::multiqubit_value(x, params_, max_qubits_);
        return detail::single_qubit_value(rotation(params_.gates.encoding(), x), layers_);
    }

    /// Writes d<Z>/dtheta into `dtheta` (size params().size()) and d<Z>/dx
    /// into `dx`; returns <Z>.
    double value_and_gradient(double x, std::span<double> dtheta, double& dx) const {
        if (dtheta.size() != params_.thetas.size()) throw ShapeError("gradient buffer has the wrong size");
        if (params_.num_qubits > 1) {
            const DRGradient g = detail::multiqubit_gradient(x, params_, max_qubits_);
            std::copy(g.dtheta.begin(), g.dtheta.end(), dtheta.begin());
            dx = g.dx;
            return g.value;
        }
        const auto slots = params_.gates.slots();
        const std::size_t per_layer = slots.size();
        const std::size_t total = params_.num_layers * per_layer;
        thread_local std::vector<std::array<Complex, 2>> states;
        states.resize(total);

        const Unitary2 encode = rotation(params_.gates.encoding(), x);
        auto gate_at = [&](std::size_t k) -> const Unitary2& {
            const std::size_t s = k % per_layer;
            return s == 0 ? encode : trainable_[(k / per_layer) * (per_layer - 1) + (s - 1)];
        };

        Complex a0{1.0, 0.0};
        Complex a1{};
        for (std::size_t k = 0; k < total; ++k) {
            apply_2x2(gate_at(k), a0, a1);
            states[k] = {a0, a1};
        }
        const double value = std::clamp(std::norm(a0) - std::norm(a1), -1.0, 1.0);

        // Adjoint state lambda = Z |psi_final>, pulled back through each gate.
        std::fill(dtheta.begin(), dtheta.end(), 0.0);
        dx = 0.0;
        Complex l0 = a0;
        Complex l1 = -a1;
        for (std::size_t k = total; k-- > 0;) {
            const GateSlot& slot = slots[k % per_layer];
            const double d = detail::generator_overlap(slot.kind, l0, l1, states[k][0], states[k][1]);
            if (slot.source == kInputSource) dx += d;
            else dtheta[params_.index(k / per_layer, static_cast<std::size_t>(slot.source))] += d;
            apply_2x2(gate_at(k).adjoint(), l0, l1);
        }
        return value;
    }

private:
    DRParams params_;
    std::size_t max_qubits_;
    std::vector<Unitary2> layers_;
    std::vector<Unitary2> trainable_;
};

/// Value and exact partial derivatives of the DR activation with respect to
/// every angle and to the input. dx sums the contributions of all L encoding
/// gates; it is zero when the input had to be clamped.
inline DRGradient dr_gradient(double x, const DRParams& params, DomainPolicy policy = DomainPolicy::Clamp,
                              std::size_t max_qubits = kDefaultMaxQubits) {
    detail::require_finite_input(x);
    params.validate();
    const auto [xin, clamped] = detail::to_domain(x, policy);
    DRGradient g;
    const DRKernel kernel(params, max_qubits);
    g.dtheta.resize(params.thetas.size());
    g.value = kernel.value_and_gradient(xin, g.dtheta, g.dx);
    if (clamped) g.dx = 0.0;
    return g;
}

} // namespace quirk
