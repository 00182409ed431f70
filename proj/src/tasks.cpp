#include "groklab/tasks.hpp"

#include <fstream>
#include <numeric>
#include <stdexcept>
#include <unordered_set>

#include "groklab/rng.hpp"

namespace groklab {

namespace {

// Fisher-Yates, high index down, driven by the supplied stream.
template <typename T>
void shuffle_in_place(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = rng.uniform_int(i);
    std::swap(v[i - 1], v[j]);
  }
}

Dataset make_dataset(const std::vector<std::uint32_t>& packed, int seq_len, int vocab,
                     int num_classes, const std::vector<int>& labels, std::string tag) {
  Dataset ds;
  ds.inputs.resize(static_cast<Eigen::Index>(packed.size()), seq_len);
  ds.labels.resize(static_cast<Eigen::Index>(packed.size()));
  for (std::size_t i = 0; i < packed.size(); ++i) {
    for (int s = 0; s < seq_len; ++s) {
      ds.inputs(static_cast<Eigen::Index>(i), s) =
          static_cast<int>((packed[i] >> (16 * s)) & 0xFFFFu);
    }
    ds.labels[static_cast<Eigen::Index>(i)] = labels[i];
  }
  ds.num_classes = num_classes;
  ds.vocab_size = vocab;
  ds.split_tag = std::move(tag);
  return ds;
}

}  // namespace

bool is_prime(int p) {
  if (p < 2) return false;
  for (int d = 2; static_cast<long long>(d) * d <= p; ++d)
    if (p % d == 0) return false;
  return true;
}

TrainValSplit gen_modular(int p, ModOp op, std::uint64_t seed) {
  if (!is_prime(p) || p < 5) throw std::invalid_argument("gen_modular: p must be a prime >= 5");

  std::vector<std::uint32_t> domain;
  domain.reserve(static_cast<std::size_t>(p) * p);
  for (int a = 0; a < p; ++a)
    for (int b = 0; b < p; ++b)
      domain.push_back(static_cast<std::uint32_t>(a) | (static_cast<std::uint32_t>(b) << 16));

  Rng data_rng = Rng(seed).split("data");
  shuffle_in_place(domain, data_rng);

  const std::size_t train_size = (static_cast<std::size_t>(p) * p * 4) / 10;  // floor(0.4 p^2)
  auto label_of = [&](std::uint32_t packed) {
    const long long a = packed & 0xFFFFu;
    const long long b = (packed >> 16) & 0xFFFFu;
    return static_cast<int>((op == ModOp::add ? a + b : a * b) % p);
  };

  TrainValSplit split;
  std::vector<std::uint32_t> part(domain.begin(), domain.begin() + static_cast<long>(train_size));
  std::vector<int> labels(part.size());
  for (std::size_t i = 0; i < part.size(); ++i) labels[i] = label_of(part[i]);
  split.train = make_dataset(part, 2, p, p, labels, "train");

  part.assign(domain.begin() + static_cast<long>(train_size), domain.end());
  labels.resize(part.size());
  for (std::size_t i = 0; i < part.size(); ++i) labels[i] = label_of(part[i]);
  split.val = make_dataset(part, 2, p, p, labels, "val");
  return split;
}

std::vector<int> parity_subset(int n, int k, std::uint64_t seed) {
  if (k < 1 || k > n) throw std::invalid_argument("parity_subset: need 1 <= k <= n");
  std::vector<int> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng = Rng(seed).split("parity_subset");
  // Partial Fisher-Yates: first k slots form the subset.
  for (int i = 0; i < k; ++i) {
    const int j = i + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(n - i)));
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
  }
  idx.resize(static_cast<std::size_t>(k));
  std::sort(idx.begin(), idx.end());
  return idx;
}

TrainValSplit gen_sparse_parity(int n, int k, int num_samples, std::uint64_t seed) {
  if (k < 1 || k > n) throw std::invalid_argument("gen_sparse_parity: need 1 <= k <= n");
  if (n < 1 || n > 30) throw std::invalid_argument("gen_sparse_parity: n out of range");
  const std::uint64_t domain = std::uint64_t{1} << n;
  if (num_samples < 2 || static_cast<std::uint64_t>(num_samples) > domain)
    throw std::invalid_argument("gen_sparse_parity: num_samples exceeds 2^n");

  const std::vector<int> subset = parity_subset(n, k, seed);
  std::uint64_t mask = 0;
  for (int i : subset) mask |= std::uint64_t{1} << i;

  Rng data_rng = Rng(seed).split("data");
  std::vector<std::uint64_t> samples;
  if (static_cast<std::uint64_t>(num_samples) == domain) {
    samples.resize(domain);
    std::iota(samples.begin(), samples.end(), std::uint64_t{0});
    shuffle_in_place(samples, data_rng);
  } else {
    // Distinct draws keep train and val disjoint by construction.
    std::unordered_set<std::uint64_t> seen;
    samples.reserve(static_cast<std::size_t>(num_samples));
    while (samples.size() < static_cast<std::size_t>(num_samples)) {
      const std::uint64_t x = data_rng.next_u64() & (domain - 1);
      if (seen.insert(x).second) samples.push_back(x);
    }
  }

  auto build = [&](std::size_t lo, std::size_t hi, const char* tag) {
    Dataset ds;
    ds.inputs.resize(static_cast<Eigen::Index>(hi - lo), n);
    ds.labels.resize(static_cast<Eigen::Index>(hi - lo));
    for (std::size_t i = lo; i < hi; ++i) {
      const std::uint64_t x = samples[i];
      for (int b = 0; b < n; ++b)
        ds.inputs(static_cast<Eigen::Index>(i - lo), b) = static_cast<int>((x >> b) & 1u);
      ds.labels[static_cast<Eigen::Index>(i - lo)] = __builtin_popcountll(x & mask) & 1;
    }
    ds.num_classes = 2;
    ds.vocab_size = 2;
    ds.split_tag = tag;
    return ds;
  };

  const std::size_t half = static_cast<std::size_t>(num_samples) / 2;
  TrainValSplit split;
  split.train = build(0, half, "train");
  split.val = build(half, static_cast<std::size_t>(num_samples), "val");
  return split;
}

void dump_dataset(const std::string& path, const Dataset& ds) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("dump_dataset: cannot open " + path);
  for (Eigen::Index i = 0; i < ds.size(); ++i) {
    for (Eigen::Index s = 0; s < ds.seq_len(); ++s) out << ds.inputs(i, s) << ' ';
    out << ds.labels[i] << '\n';
  }
}

}  // namespace groklab
