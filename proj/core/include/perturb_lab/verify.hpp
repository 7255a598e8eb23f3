#pragma once

#include <cstddef>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "perturb_lab/embed.hpp"
#include "perturb_lab/matrix.hpp"

namespace perturb_lab::verify {

/// Substitutable pieces, so harnesses can confirm the suite catches faults.
struct Hooks {
    std::function<Matrix(const EmbeddedSequence&, const Matrix&, double)> grad_wrt_mask;
};

Hooks default_hooks();

struct CheckResult {
    std::string group;
    std::string name;
    std::string tolerance;
    bool passed = false;
    std::string detail;
};

struct Report {
    std::vector<CheckResult> checks;

    bool all_passed() const;
    std::size_t group_count() const;
};

Report run_all(const Hooks& hooks = default_hooks());

/// One line per check, then a summary line.
void print(const Report& report, std::ostream& out);

/// Prints the report and returns the process exit status.
int cmd_verify(std::ostream& out, const Hooks& hooks = default_hooks());

}  // namespace perturb_lab::verify
