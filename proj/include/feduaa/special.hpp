#pragma once

namespace feduaa {

// Local log-gamma / digamma / trigamma for positive arguments: arguments are
// shifted up by the recurrence until >= 10, then the asymptotic series is
// applied. Absolute-or-relative accuracy is ~1e-13 on [1, 1e6], comfortably
// inside the 1e-10 budget the loss stack needs.
double log_gamma(double x);
double digamma(double x);
double trigamma(double x);

}  // namespace feduaa
