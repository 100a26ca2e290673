#include "iclr/distribution.hpp"

#include <cmath>

#include "iclr/error.hpp"

namespace iclr {

int LabelDistribution::argmax() const {
  if (probs.size() == 0) throw Error("victim", "argmax of an empty distribution");
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < probs.size(); ++i) {
    if (probs(i) > probs(best)) best = i;
  }
  return static_cast<int>(best);
}

bool is_probability_vector(const Eigen::Ref<const Eigen::VectorXd>& p, double tol) {
  if (p.size() == 0) return false;
  if (!p.allFinite() || (p.array() < 0.0).any()) return false;
  return std::abs(p.sum() - 1.0) <= tol;
}

Eigen::VectorXd softmax(const Eigen::Ref<const Eigen::VectorXd>& logits, double temperature) {
  if (!(temperature > 0.0)) throw ConfigError("victim", "temperature must be positive");
  Eigen::VectorXd z = logits / temperature;
  z.array() -= z.maxCoeff();
  Eigen::VectorXd e = z.array().exp();
  return e / e.sum();
}

double total_variation(const LabelDistribution& p, const LabelDistribution& q) {
  if (p.size() != q.size()) throw Error("victim", "total variation of mismatched distributions");
  return 0.5 * (p.probs - q.probs).cwiseAbs().sum();
}

}  // namespace iclr
