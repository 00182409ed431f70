#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace groklab {

enum class ModOp { add, mult };

struct Dataset {
  Eigen::MatrixXi inputs;  // rows = examples, cols = token positions (or bit slots)
  Eigen::VectorXi labels;
  int num_classes = 0;
  int vocab_size = 0;
  std::string split_tag;  // "train" | "val"

  Eigen::Index size() const { return inputs.rows(); }
  Eigen::Index seq_len() const { return inputs.cols(); }
};

struct TrainValSplit {
  Dataset train;
  Dataset val;
};

bool is_prime(int p);

// Full p*p domain, shuffled by the run seed, first floor(0.4*p^2) examples
// train, the rest validation. Tokens are [a, b], label (a op b) mod p.
TrainValSplit gen_modular(int p, ModOp op, std::uint64_t seed);

// num_samples distinct n-bit vectors, 50/50 split, label = XOR over a fixed
// subset S of size k drawn once from the seed.
TrainValSplit gen_sparse_parity(int n, int k, int num_samples, std::uint64_t seed);

// The subset used by gen_sparse_parity for the given (n, k, seed); sorted.
std::vector<int> parity_subset(int n, int k, std::uint64_t seed);

// Audit dump, one "a b label" (or "b0 b1 ... label") line per example.
void dump_dataset(const std::string& path, const Dataset& ds);

}  // namespace groklab
