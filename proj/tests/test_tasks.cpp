#include "doctest.h"

#include <cmath>
#include <set>

#include "groklab/tasks.hpp"

using namespace groklab;

TEST_CASE("gen_modular: split sizes follow floor(0.4 p^2)") {
  const TrainValSplit s97 = gen_modular(97, ModOp::add, 42);
  CHECK(s97.train.size() == 3763);  // floor(0.4 * 9409)
  CHECK(s97.val.size() == 9409 - 3763);

  const TrainValSplit s53 = gen_modular(53, ModOp::mult, 1);
  CHECK(s53.train.size() == 1123);  // floor(0.4 * 2809)
}

TEST_CASE("gen_modular: labels correct by definition, exhaustively") {
  for (int p : {5, 23, 97}) {
    for (ModOp op : {ModOp::add, ModOp::mult}) {
      const TrainValSplit s = gen_modular(p, op, 7);
      for (const Dataset* ds : {&s.train, &s.val}) {
        for (Eigen::Index i = 0; i < ds->size(); ++i) {
          const long long a = ds->inputs(i, 0);
          const long long b = ds->inputs(i, 1);
          const int expected = static_cast<int>((op == ModOp::add ? a + b : a * b) % p);
          CHECK(ds->labels[i] == expected);
        }
      }
    }
  }
}

TEST_CASE("gen_modular: hand-checked label (3+4) mod 5") {
  const TrainValSplit s = gen_modular(5, ModOp::add, 3);
  bool found = false;
  for (const Dataset* ds : {&s.train, &s.val}) {
    for (Eigen::Index i = 0; i < ds->size(); ++i) {
      if (ds->inputs(i, 0) == 3 && ds->inputs(i, 1) == 4) {
        CHECK(ds->labels[i] == 2);
        found = true;
      }
    }
  }
  CHECK(found);
}

TEST_CASE("gen_modular: same seed reproduces bit-for-bit, no train/val overlap") {
  const TrainValSplit a = gen_modular(23, ModOp::add, 42);
  const TrainValSplit b = gen_modular(23, ModOp::add, 42);
  CHECK(a.train.inputs == b.train.inputs);
  CHECK(a.train.labels == b.train.labels);
  CHECK(a.val.inputs == b.val.inputs);

  std::set<std::pair<int, int>> train_pairs;
  for (Eigen::Index i = 0; i < a.train.size(); ++i)
    train_pairs.insert({a.train.inputs(i, 0), a.train.inputs(i, 1)});
  for (Eigen::Index i = 0; i < a.val.size(); ++i)
    CHECK(train_pairs.count({a.val.inputs(i, 0), a.val.inputs(i, 1)}) == 0);
  CHECK(train_pairs.size() + static_cast<std::size_t>(a.val.size()) == 23 * 23);
}

TEST_CASE("gen_modular: different seeds shuffle differently") {
  const TrainValSplit a = gen_modular(23, ModOp::add, 42);
  const TrainValSplit b = gen_modular(23, ModOp::add, 43);
  CHECK(a.train.inputs != b.train.inputs);
}

TEST_CASE("gen_modular: rejects non-prime p") {
  CHECK_THROWS_AS(gen_modular(21, ModOp::add, 1), std::invalid_argument);
  CHECK_THROWS_AS(gen_modular(4, ModOp::add, 1), std::invalid_argument);
}

TEST_CASE("gen_sparse_parity: split sizes and disjointness") {
  const TrainValSplit s = gen_sparse_parity(20, 3, 4096, 42);
  CHECK(s.train.size() == 2048);
  CHECK(s.val.size() == 2048);

  auto pack = [](const Dataset& ds, Eigen::Index i) {
    std::uint64_t x = 0;
    for (Eigen::Index b = 0; b < ds.seq_len(); ++b)
      if (ds.inputs(i, b)) x |= std::uint64_t{1} << b;
    return x;
  };
  std::set<std::uint64_t> seen;
  for (Eigen::Index i = 0; i < s.train.size(); ++i) CHECK(seen.insert(pack(s.train, i)).second);
  for (Eigen::Index i = 0; i < s.val.size(); ++i) CHECK(seen.insert(pack(s.val, i)).second);
}

TEST_CASE("gen_sparse_parity: labels are XOR over the fixed subset") {
  const int n = 12, k = 4;
  const TrainValSplit s = gen_sparse_parity(n, k, 512, 9);
  const std::vector<int> subset = parity_subset(n, k, 9);
  CHECK(subset.size() == static_cast<std::size_t>(k));
  for (const Dataset* ds : {&s.train, &s.val}) {
    for (Eigen::Index i = 0; i < ds->size(); ++i) {
      int parity = 0;
      for (int bit : subset) parity ^= ds->inputs(i, bit);
      CHECK(ds->labels[i] == parity);
    }
  }
}

TEST_CASE("gen_sparse_parity: k=1 gives the single bit itself") {
  const TrainValSplit s = gen_sparse_parity(8, 1, 128, 5);
  const std::vector<int> subset = parity_subset(8, 1, 5);
  const int bit = subset[0];
  for (Eigen::Index i = 0; i < s.train.size(); ++i)
    CHECK(s.train.labels[i] == s.train.inputs(i, bit));
}

TEST_CASE("gen_sparse_parity: label balance is near one half") {
  const TrainValSplit s = gen_sparse_parity(20, 3, 4096, 42);
  long ones = 0;
  for (const Dataset* ds : {&s.train, &s.val})
    for (Eigen::Index i = 0; i < ds->size(); ++i) ones += ds->labels[i];
  const double frac = static_cast<double>(ones) / 4096.0;
  CHECK(std::abs(frac - 0.5) < 0.03);
}

TEST_CASE("gen_sparse_parity: full-domain enumeration when num_samples = 2^n") {
  const TrainValSplit s = gen_sparse_parity(8, 2, 256, 11);
  CHECK(s.train.size() == 128);
  CHECK(s.val.size() == 128);
  CHECK_THROWS_AS(gen_sparse_parity(8, 2, 257, 11), std::invalid_argument);
  CHECK_THROWS_AS(gen_sparse_parity(8, 9, 64, 11), std::invalid_argument);
}

TEST_CASE("is_prime basics") {
  CHECK(is_prime(2));
  CHECK(is_prime(97));
  CHECK(is_prime(113));
  CHECK_FALSE(is_prime(1));
  CHECK_FALSE(is_prime(91));  // 7 * 13
}
