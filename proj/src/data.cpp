#include "feduaa/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "feduaa/errors.hpp"
#include "feduaa/model.hpp"
#include "feduaa/rng.hpp"

namespace feduaa {

void ClientPartition::validate(bool require_train_class_coverage) const {
    if (k < 2) throw DomainError("partition " + client_id + ": class count must be >= 2");
    if (static_cast<int>(labels.size()) != features.rows) {
        throw ShapeError("partition " + client_id + ": label count does not match feature rows");
    }
    for (int y : labels) {
        if (y < 0 || y >= k) {
            throw DomainError("partition " + client_id + ": label " + std::to_string(y) +
                              " outside [0, " + std::to_string(k) + ")");
        }
    }
    std::vector<char> seen(static_cast<std::size_t>(features.rows), 0);
    auto mark = [&](const std::vector<int>& idx) {
        for (int i : idx) {
            if (i < 0 || i >= features.rows) {
                throw DomainError("partition " + client_id + ": split index out of range");
            }
            if (seen[static_cast<std::size_t>(i)]) {
                throw DomainError("partition " + client_id + ": splits overlap at index " +
                                  std::to_string(i));
            }
            seen[static_cast<std::size_t>(i)] = 1;
        }
    };
    mark(train_idx);
    mark(val_idx);
    mark(test_idx);
    for (char s : seen) {
        if (!s) throw DomainError("partition " + client_id + ": splits do not cover every sample");
    }
    if (require_train_class_coverage) {
        std::set<int> train_classes;
        for (int i : train_idx) train_classes.insert(labels[static_cast<std::size_t>(i)]);
        if (static_cast<int>(train_classes.size()) != k) {
            throw DomainError("partition " + client_id + ": a class is missing from the train split");
        }
    }
}

void GenSpec::validate() const {
    if (clients.empty()) throw ConfigError("GenSpec: no clients");
    if (input_dim < 1) throw ConfigError("GenSpec: input_dim must be positive");
    if (!(cluster_separation >= 0.0)) throw ConfigError("GenSpec: cluster_separation must be >= 0");
    if (!(cluster_stddev > 0.0)) throw ConfigError("GenSpec: cluster_stddev must be positive");
    std::set<std::string> ids;
    for (const auto& c : clients) {
        if (c.client_id.empty()) throw ConfigError("GenSpec: empty client_id");
        if (!ids.insert(c.client_id).second) {
            throw ConfigError("GenSpec: duplicate client_id '" + c.client_id + "'");
        }
        if (c.k < 2) throw ConfigError("GenSpec: client " + c.client_id + ": K must be >= 2");
        if (c.k > input_dim) {
            throw ConfigError("GenSpec: client " + c.client_id +
                              ": K exceeds input_dim, no simplex vertex left for every class");
        }
        if (c.samples < 10 * c.k) {
            throw ConfigError("GenSpec: client " + c.client_id + ": need at least 10*K samples");
        }
        if (!(c.label_skew > 0.0)) {
            throw ConfigError("GenSpec: client " + c.client_id + ": label_skew must be positive");
        }
        if (c.label_noise < 0.0 || c.label_noise > 1.0) {
            throw ConfigError("GenSpec: client " + c.client_id + ": label_noise must be in [0, 1]");
        }
    }
}

GenSpec default_benchmark(std::uint64_t seed) {
    GenSpec spec;
    spec.seed = seed;
    spec.input_dim = 20;
    spec.cluster_separation = 6.0;
    spec.cluster_stddev = 1.0;
    spec.clients = {
        {"aptos", 5, 366, 1.0, 0.0, 0.0},    {"messidor", 4, 120, 1.0, 1.0, 0.0},
        {"ddr", 6, 1367, 1.0, -1.0, 0.0},    {"drr", 5, 3512, 1.0, 2.0, 0.0},
        {"idrid", 5, 51, 1.0, -2.0, 0.0},
    };
    return spec;
}

namespace {

// 80/10/10 with every part non-empty.
void split_indices(int n, Rng& rng, std::vector<int>& train, std::vector<int>& val,
                   std::vector<int>& test) {
    std::vector<int> order(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
    rng.shuffle(order);
    const int n_test = std::max(1, n / 10);
    const int n_val = std::max(1, n / 10);
    const int n_train = n - n_val - n_test;
    train.assign(order.begin(), order.begin() + n_train);
    val.assign(order.begin() + n_train, order.begin() + n_train + n_val);
    test.assign(order.begin() + n_train + n_val, order.end());
}

bool train_split_covers_classes(const std::vector<int>& labels, const std::vector<int>& train_idx,
                                int k) {
    std::vector<char> seen(static_cast<std::size_t>(k), 0);
    int distinct = 0;
    for (int i : train_idx) {
        char& s = seen[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])];
        if (!s) {
            s = 1;
            ++distinct;
        }
    }
    return distinct == k;
}

ClientPartition generate_client(const GenSpec& spec, const ClientGenSpec& cs) {
    Rng rng(derive_seed(spec.seed, "data:" + cs.client_id));

    ClientPartition part;
    part.client_id = cs.client_id;
    part.k = cs.k;

    const int d = spec.input_dim;
    const int n = cs.samples;
    for (int attempt = 0; attempt < 100; ++attempt) {
        const std::vector<double> proportions = rng.dirichlet(cs.label_skew, cs.k);

        part.labels.resize(static_cast<std::size_t>(n));
        part.features = Tensor2(n, d);
        for (int i = 0; i < n; ++i) {
            int y = rng.discrete(proportions);
            // class cluster at separation * e_y, plus isotropic noise
            double* row = part.features.row(i);
            for (int c = 0; c < d; ++c) {
                row[c] = spec.cluster_stddev * rng.normal() + cs.feature_shift;
            }
            row[y] += spec.cluster_separation;
            if (cs.label_noise > 0.0 && rng.uniform() < cs.label_noise) {
                const int other = static_cast<int>(rng.below(static_cast<std::uint64_t>(cs.k - 1)));
                y = (other >= y) ? other + 1 : other;
            }
            part.labels[static_cast<std::size_t>(i)] = y;
        }

        split_indices(n, rng, part.train_idx, part.val_idx, part.test_idx);
        if (train_split_covers_classes(part.labels, part.train_idx, cs.k)) {
            part.validate();
            return part;
        }
    }
    throw DomainError("generate: client " + cs.client_id +
                      ": a class was missing from the train split after 100 attempts");
}

}  // namespace

FederatedDataset generate(const GenSpec& spec) {
    spec.validate();
    FederatedDataset data;
    data.partitions.reserve(spec.clients.size());
    for (const auto& cs : spec.clients) data.partitions.push_back(generate_client(spec, cs));
    return data;
}

Tensor2 corrupt(const Tensor2& features, const NoiseSpec& noise, std::uint64_t seed) {
    if (!(noise.sigma_squared >= 0.0)) throw DomainError("corrupt: sigma_squared must be >= 0");
    if (noise.sigma_squared == 0.0) return features;
    Rng rng(derive_seed(seed, "corrupt"));
    const double sigma = std::sqrt(noise.sigma_squared);
    Tensor2 out = features;
    for (auto& v : out.data) v += sigma * rng.normal();
    require_finite(out, "corrupt output");
    return out;
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> cells;
    std::size_t start = 0;
    for (;;) {
        const std::size_t comma = line.find(',', start);
        if (comma == std::string::npos) {
            cells.push_back(line.substr(start));
            break;
        }
        cells.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
    return cells;
}

std::string csv_header(int d) {
    std::string h;
    for (int c = 0; c < d; ++c) h += "f" + std::to_string(c) + ",";
    h += "label";
    return h;
}

}  // namespace

ClientPartition load_csv(const std::string& path, const std::string& client_id, int k,
                         std::uint64_t split_seed) {
    if (k < 2) throw DomainError("load_csv: class count must be >= 2");
    std::ifstream in(path);
    if (!in) throw IoError("cannot open dataset csv: " + path);

    std::string line;
    if (!std::getline(in, line)) throw ParseError(path + ": empty file");
    const auto header = split_line(line);
    if (header.size() < 2 || header.back() != "label") {
        throw ParseError(path + ":1: expected header f0,...,label");
    }
    const int d = static_cast<int>(header.size()) - 1;
    for (int c = 0; c < d; ++c) {
        if (header[static_cast<std::size_t>(c)] != "f" + std::to_string(c)) {
            throw ParseError(path + ":1: unexpected column '" + header[static_cast<std::size_t>(c)] + "'");
        }
    }

    std::vector<double> values;
    std::vector<int> labels;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto cells = split_line(line);
        if (static_cast<int>(cells.size()) != d + 1) {
            throw ParseError(path + ":" + std::to_string(lineno) + ": expected " + std::to_string(d + 1) +
                             " cells, found " + std::to_string(cells.size()));
        }
        for (int c = 0; c < d; ++c) {
            const std::string& cell = cells[static_cast<std::size_t>(c)];
            char* end = nullptr;
            const double v = std::strtod(cell.c_str(), &end);
            if (end == cell.c_str() || *end != '\0' || !std::isfinite(v)) {
                throw ParseError(path + ":" + std::to_string(lineno) + ": bad numeric cell '" + cell + "'");
            }
            values.push_back(v);
        }
        const std::string& label_cell = cells.back();
        char* end = nullptr;
        const long y = std::strtol(label_cell.c_str(), &end, 10);
        if (end == label_cell.c_str() || *end != '\0') {
            throw ParseError(path + ":" + std::to_string(lineno) + ": bad label cell '" + label_cell + "'");
        }
        if (y < 0 || y >= k) {
            throw DomainError(path + ":" + std::to_string(lineno) + ": label " + std::to_string(y) +
                              " outside [0, " + std::to_string(k) + ")");
        }
        labels.push_back(static_cast<int>(y));
    }
    if (labels.empty()) throw ParseError(path + ": no data rows");

    ClientPartition part;
    part.client_id = client_id;
    part.k = k;
    part.features = Tensor2(static_cast<int>(labels.size()), d, std::move(values));
    part.labels = std::move(labels);

    Rng rng(derive_seed(split_seed, "split:" + client_id));
    split_indices(part.features.rows, rng, part.train_idx, part.val_idx, part.test_idx);
    part.validate(false);
    return part;
}

void write_partition_csv(const std::string& path, const ClientPartition& partition) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open dataset csv for writing: " + path);
    out << csv_header(partition.features.cols) << '\n';
    for (int r = 0; r < partition.features.rows; ++r) {
        for (int c = 0; c < partition.features.cols; ++c) {
            out << format_double(partition.features.at(r, c)) << ',';
        }
        out << partition.labels[static_cast<std::size_t>(r)] << '\n';
    }
    if (!out) throw IoError("write failed: " + path);
}

void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open manifest for writing: " + path);
    out << "client_id,path,K\n";
    for (const auto& e : entries) {
        out << e.client_id << ',' << e.path << ',' << e.k << '\n';
    }
    if (!out) throw IoError("write failed: " + path);
}

std::vector<ManifestEntry> read_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open manifest: " + path);
    std::vector<ManifestEntry> entries;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        if (lineno == 1 && line == "client_id,path,K") continue;
        const auto cells = split_line(line);
        if (cells.size() != 3) {
            throw ParseError(path + ":" + std::to_string(lineno) + ": expected client_id,path,K");
        }
        ManifestEntry e;
        e.client_id = cells[0];
        e.path = cells[1];
        try {
            e.k = std::stoi(cells[2]);
        } catch (const std::exception&) {
            throw ParseError(path + ":" + std::to_string(lineno) + ": bad K '" + cells[2] + "'");
        }
        for (const auto& prev : entries) {
            if (prev.client_id == e.client_id) {
                throw ParseError(path + ":" + std::to_string(lineno) + ": duplicate client_id '" +
                                 e.client_id + "'");
            }
        }
        entries.push_back(std::move(e));
    }
    if (entries.empty()) throw ParseError(path + ": no manifest entries");
    return entries;
}

FederatedDataset load_manifest(const std::string& path, std::uint64_t split_seed) {
    const auto entries = read_manifest(path);
    const std::filesystem::path base = std::filesystem::path(path).parent_path();
    FederatedDataset data;
    for (const auto& e : entries) {
        const std::filesystem::path rel(e.path);
        const std::filesystem::path csv = rel.is_absolute() ? rel : base / rel;
        data.partitions.push_back(load_csv(csv.string(), e.client_id, e.k, split_seed));
    }
    return data;
}

}  // namespace feduaa
