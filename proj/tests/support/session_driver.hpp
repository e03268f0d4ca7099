#pragma once

// Random operation sequences against a SessionManager, shared by the
// state-machine and crash-recovery tests.

#include <string>

#include "generators.hpp"
#include "taskalign/session.hpp"

namespace driver {

enum class Op { Prompt, Edits, Modify, Confirm, Focus };

struct Outcome {
  Op op;
  taskalign::SessionStatus before;
  bool ok = false;
  std::optional<taskalign::ErrorCode> error;
};

/// Picks and runs one operation, drawing only from `rng` and the session's
/// current state, so equal seeds replay identically. Errors are reported, not thrown.
Outcome random_step(gen::Rng& rng, taskalign::SessionManager& manager, const std::string& id);

/// Statuses from which `op` may be called.
bool allowed(Op op, taskalign::SessionStatus status);

}  // namespace driver
