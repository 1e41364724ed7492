#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>

namespace quirk {

// Process-wide warning counters. Numerical kernels never print; they bump a
// counter and the front end decides what to report.
struct Diagnostics {
    std::atomic<std::uint64_t> clamped_dr_inputs{0};
    std::atomic<std::uint64_t> clamped_rescale_inputs{0};
    std::atomic<std::uint64_t> clamped_network_inputs{0};
    std::atomic<std::uint64_t> regularized_solves{0};
    std::atomic<std::uint64_t> refused_prunes{0};
    std::atomic<std::uint64_t> rounded_budgets{0};

    void reset() {
        clamped_dr_inputs = 0;
        clamped_rescale_inputs = 0;
        clamped_network_inputs = 0;
        regularized_solves = 0;
        refused_prunes = 0;
        rounded_budgets = 0;
    }
};

inline Diagnostics& diagnostics() {
    static Diagnostics instance;
    return instance;
}

using WarningHandler = std::function<void(const std::string&)>;

inline WarningHandler& warning_handler() {
    static WarningHandler handler;
    return handler;
}

// Install before starting any worker threads.
inline void set_warning_handler(WarningHandler handler) { warning_handler() = std::move(handler); }

inline void warn(const std::string& message) {
    if (const auto& handler = warning_handler()) handler(message);
}

} // namespace quirk
