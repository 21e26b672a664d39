#pragma once

namespace argan::debug {

// Fault injection for exercising the gradient-check harness: when enabled,
// the sigmoid backward rule is scaled by 1.1.
void inject_sigmoid_backward_fault(bool on);
bool sigmoid_backward_fault();

}  // namespace argan::debug
