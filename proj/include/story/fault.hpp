#pragma once

namespace story {

/// Deliberate defects that can be injected into the backward pass. They exist
/// so the gradient checker can be shown to catch broken derivatives; training
/// always runs with `none`.
enum class BackwardFault {
  none,
  tanh_derivative,  // every tanh'(x) replaced by 1
  attention,        // softmax Jacobian skipped in the attention backward
  forget_gate,      // sigmoid' dropped from the forget-gate backward
};

/// d tanh / dx expressed through y = tanh(x).
inline double tanh_grad(double y, BackwardFault fault) {
  return fault == BackwardFault::tanh_derivative ? 1.0 : 1.0 - y * y;
}

}  // namespace story
