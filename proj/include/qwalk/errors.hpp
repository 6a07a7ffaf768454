#pragma once

#include <optional>
#include <stdexcept>
#include <string>

namespace qwalk {

/// Quasienergy band touches E=0 or E=pi: the Bloch axis n_k is undefined there.
class gap_closure_error : public std::runtime_error {
 public:
  explicit gap_closure_error(double quasienergy, std::optional<double> momentum = {},
                             std::optional<int> node = {})
      : std::runtime_error(describe(quasienergy, momentum, node)),
        quasienergy_(quasienergy), momentum_(momentum), node_(node) {}

  double quasienergy() const { return quasienergy_; }
  std::optional<double> momentum() const { return momentum_; }
  std::optional<int> node() const { return node_; }

 private:
  static std::string describe(double e, std::optional<double> k, std::optional<int> node) {
    std::string msg = "gap closure: quasienergy " + std::to_string(e);
    if (k) msg += " at k=" + std::to_string(*k);
    if (node) msg += " (node " + std::to_string(*node) + ")";
    return msg;
  }
  double quasienergy_;
  std::optional<double> momentum_;
  std::optional<int> node_;
};

/// Adjacent spinors nearly orthogonal; the Wilson-loop overlap is meaningless.
class grid_too_coarse_error : public std::runtime_error {
 public:
  explicit grid_too_coarse_error(int node)
      : std::runtime_error("grid too coarse: vanishing overlap after node " + std::to_string(node)),
        node_(node) {}
  int node() const { return node_; }

 private:
  int node_;
};

/// A density matrix required to be full rank is (numerically) singular.
class rank_deficiency_error : public std::runtime_error {
 public:
  rank_deficiency_error(int node, double min_eigenvalue)
      : std::runtime_error("rank-deficient density matrix at node " + std::to_string(node) +
                           " (min eigenvalue " + std::to_string(min_eigenvalue) + ")"),
        node_(node), min_eigenvalue_(min_eigenvalue) {}
  int node() const { return node_; }
  double min_eigenvalue() const { return min_eigenvalue_; }

 private:
  int node_;
  double min_eigenvalue_;
};

/// Momentum node carries (numerically) no weight of a reconstructed state.
class degenerate_momentum_weight_error : public std::runtime_error {
 public:
  explicit degenerate_momentum_weight_error(int node)
      : std::runtime_error("degenerate momentum weight at node " + std::to_string(node)),
        node_(node) {}
  int node() const { return node_; }

 private:
  int node_;
};

}  // namespace qwalk
