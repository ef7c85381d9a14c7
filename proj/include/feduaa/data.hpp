#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "feduaa/tensor.hpp"

namespace feduaa {

// One client's labeled features plus its train/val/test index split.
struct ClientPartition {
    std::string client_id;
    int k = 0; // client-specific class count
    Tensor2 features;
    std::vector<int> labels;
    std::vector<int> train_idx;
    std::vector<int> val_idx;
    std::vector<int> test_idx;

    int sample_count() const { return features.rows; }

    // Structural checks always run; generated benchmarks additionally require
    // every class to appear in the train split (hand-written CSVs may be too
    // small for that).
    void validate(bool require_train_class_coverage = true) const;
};

struct FederatedDataset {
    std::vector<ClientPartition> partitions;
};

struct ClientGenSpec {
    std::string client_id;
    int k = 2;
    int samples = 100;
    double label_skew = 1.0;    // Dirichlet concentration for class proportions; large => uniform
    double feature_shift = 0.0; // added to every feature coordinate
    double label_noise = 0.0;   // fraction of labels flipped to a random other class
};

struct GenSpec {
    std::vector<ClientGenSpec> clients;
    int input_dim = 20;
    double cluster_separation = 6.0; // distance scale between class centers
    double cluster_stddev = 1.0;
    std::uint64_t seed = 0;

    void validate() const;
};

struct NoiseSpec {
    double sigma_squared = 0.0; // Gaussian variance added to test features
};

// The desk-scale stand-in for the five-institution setting: class counts
// (5, 4, 6, 5, 5) and sample counts (366, 120, 1367, 3512, 51), preserving the
// original imbalance ratios at a tenth of the size.
GenSpec default_benchmark(std::uint64_t seed);

// Each client's partition depends only on (seed, its own spec), so the same
// client spec regenerates identically no matter which siblings it is grouped
// with. Class clusters sit on a scaled coordinate simplex shared by all
// clients; heterogeneity comes from proportions, shift, noise and size.
FederatedDataset generate(const GenSpec& spec);

// features + N(0, sigma^2) i.i.d. per entry; sigma^2 = 0 returns the input
// unchanged.
Tensor2 corrupt(const Tensor2& features, const NoiseSpec& noise, std::uint64_t seed);

// CSV with header `f0,...,f{d-1},label`. The split is recomputed from
// (split_seed, client_id) so loading is deterministic.
ClientPartition load_csv(const std::string& path, const std::string& client_id, int k,
                         std::uint64_t split_seed);
void write_partition_csv(const std::string& path, const ClientPartition& partition);

struct ManifestEntry {
    std::string client_id;
    std::string path; // relative to the manifest's directory
    int k = 0;
};

void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries);
std::vector<ManifestEntry> read_manifest(const std::string& path);
FederatedDataset load_manifest(const std::string& path, std::uint64_t split_seed);

}  // namespace feduaa
