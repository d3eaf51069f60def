#pragma once

namespace bvmp {

/// Space dimension, growth exponent q, threshold beta, current exponent p and cap p_bar.
struct ProblemParams {
    int dim = 2;
    double q = 1.5;
    double beta = 0.2;
    double p = 1.25;
    double p_bar = 1.25;

    /// 1D runs are a model problem: the admissible range for q is (1, 2) and
    /// every dimension-dependent constant is evaluated with N = 2.
    bool model() const { return dim == 1; }

    ProblemParams with_p(double new_p) const {
        ProblemParams r = *this;
        r.p = new_p;
        return r;
    }
    ProblemParams with_beta(double new_beta) const {
        ProblemParams r = *this;
        r.beta = new_beta;
        return r;
    }
};

/// Upper end of the admissible q range: N/(N-1) for N >= 2, 2 for the 1D model.
double q_upper(int dim);

/// Throws Error("invalid_argument") naming the violated constraint.
void validate(const ProblemParams& params);

}  // namespace bvmp
