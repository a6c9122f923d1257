#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "dgar/rng.hpp"
#include "dgar/tensor.hpp"

namespace dgar::data {

// One labeled sensing sample. Labels are 1-based (y in {1..C}).
struct SampleRecord {
    int64_t sample_id = 0;
    int domain_id = 0;
    int label = 0;
    Tensor<float> input;  // D x L
};

struct ContainerManifest {
    int version = 1;
    std::string modality;  // "ofdm" | "lfm" | "imported"
    int n_classes = 0;
    int n_domains = 0;
    int64_t d = 0;
    int64_t l = 0;
    std::string dtype = "f32";
    std::map<int, int64_t> per_domain_counts;
    uint64_t seed = 0;
    std::string config_hash;
};

// In-memory dataset. On disk this is a directory of three files:
// manifest.json, data.blob (contiguous little-endian f32 sample tensors) and
// index.bin (per record: u64 byte offset, i32 domain_id, i32 label, all
// little-endian, offsets strictly increasing).
struct DatasetContainer {
    ContainerManifest manifest;
    std::vector<SampleRecord> records;

    std::vector<int> domain_ids() const;
    std::vector<int64_t> record_ids_of_domain(int domain) const;
    void validate() const;
};

void save_container(const DatasetContainer& c, const std::string& dir);
DatasetContainer load_container(const std::string& dir);

// FNV-1a 64-bit, used for blob/index checksums and config hashes.
uint64_t fnv1a(const void* data, size_t len, uint64_t seed = 1469598103934665603ull);

// One leave-one-domain-out fold: domain `target_domain` is held out, the
// remaining domains are sources; train/val partition the source records,
// stratified per (domain, class).
struct LodoFold {
    int target_domain = 0;
    std::vector<int> source_domains;
    std::vector<int64_t> train_ids;
    std::vector<int64_t> val_ids;
    std::vector<int64_t> test_ids;  // all records of the target domain
};

// Stratified split of the given record ids by (domain, class). Strata with a
// single record cannot be split; they are pooled and split proportionally
// (with a warning on stderr).
std::pair<std::vector<int64_t>, std::vector<int64_t>> split_train_val(
    const DatasetContainer& c, const std::vector<int64_t>& ids, double fraction, uint64_t seed);

// One fold per domain, each with the 20% validation split applied.
std::vector<LodoFold> lodo_folds(const DatasetContainer& c, double val_fraction = 0.2,
                                 uint64_t seed = 0);

// A training mini-batch: record ids grouped contiguously per source domain.
struct DomainBatch {
    std::vector<int64_t> ids;
    struct Range {
        int domain;
        int64_t begin, end;  // row range within the batch
    };
    std::vector<Range> ranges;
};

// Balanced multi-domain batching: every batch holds floor(B/K) records per
// source domain, the remainder rotating round-robin across batches; records
// are drawn without replacement, so an epoch covers every training record
// exactly once (the final batch may be smaller).
class BalancedBatchSampler {
  public:
    BalancedBatchSampler(const DatasetContainer& c, const std::vector<int64_t>& train_ids,
                         const std::vector<int>& source_domains, int64_t batch_size);

    // Deterministic for a given seed.
    std::vector<DomainBatch> epoch(uint64_t seed) const;

    int64_t records_per_epoch() const { return total_; }

  private:
    std::vector<std::vector<int64_t>> by_domain_;  // ids grouped by source domain order
    std::vector<int> domains_;
    int64_t batch_size_;
    int64_t total_ = 0;
};

// Wraps a directory of per-sample f32 matrix files plus a CSV of
// (file, domain_id, label) rows into a container; lets externally collected
// datasets run through the same pipeline. See README for the exact schema.
DatasetContainer import_external(const std::string& csv_path, int64_t d, int64_t l);

}  // namespace dgar::data
