#include "dgar/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "dgar/errors.hpp"

namespace dgar::data {

namespace fs = std::filesystem;
using nlohmann::json;

uint64_t fnv1a(const void* data, size_t len, uint64_t seed) {
    const auto* p = static_cast<const unsigned char*>(data);
    uint64_t h = seed;
    for (size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
    return h;
}

namespace {

void put_u32(std::string& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_u64(std::string& out, uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
uint32_t get_u32(const char* p) {
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(static_cast<unsigned char>(p[i])) << (8 * i);
    return v;
}
uint64_t get_u64(const char* p) {
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
    return v;
}
void put_f32(std::string& out, float f) { put_u32(out, std::bit_cast<uint32_t>(f)); }
float get_f32(const char* p) { return std::bit_cast<float>(get_u32(p)); }

std::string read_file(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    if (!f) throw DataError("cannot open " + p.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

void write_file(const fs::path& p, const std::string& bytes) {
    std::ofstream f(p, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot write " + p.string());
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw DataError("short write to " + p.string());
}

}  // namespace

std::vector<int> DatasetContainer::domain_ids() const {
    std::set<int> s;
    for (const auto& r : records) s.insert(r.domain_id);
    return {s.begin(), s.end()};
}

std::vector<int64_t> DatasetContainer::record_ids_of_domain(int domain) const {
    std::vector<int64_t> ids;
    for (const auto& r : records)
        if (r.domain_id == domain) ids.push_back(r.sample_id);
    return ids;
}

void DatasetContainer::validate() const {
    for (const auto& r : records) {
        if (r.label < 1 || r.label > manifest.n_classes)
            throw DataError("record " + std::to_string(r.sample_id) + ": label " +
                            std::to_string(r.label) + " outside [1, " +
                            std::to_string(manifest.n_classes) + "]");
        if (r.input.rank() != 2 || r.input.dim(0) != manifest.d || r.input.dim(1) != manifest.l)
            throw DataError("record " + std::to_string(r.sample_id) + ": input shape " +
                            r.input.shape_str() + " does not match manifest " +
                            std::to_string(manifest.d) + "x" + std::to_string(manifest.l));
    }
}

void save_container(const DatasetContainer& c, const std::string& dir) {
    c.validate();
    fs::create_directories(dir);

    std::string blob;
    std::string index;
    blob.reserve(c.records.size() * static_cast<size_t>(c.manifest.d * c.manifest.l) * 4);
    uint64_t offset = 0;
    for (const auto& r : c.records) {
        put_u64(index, offset);
        put_u32(index, static_cast<uint32_t>(r.domain_id));
        put_u32(index, static_cast<uint32_t>(r.label));
        for (int64_t i = 0; i < r.input.numel(); ++i) put_f32(blob, r.input[i]);
        offset += static_cast<uint64_t>(r.input.numel()) * 4;
    }

    std::map<int, int64_t> counts;
    for (const auto& r : c.records) counts[r.domain_id] += 1;

    json j;
    j["version"] = c.manifest.version;
    j["modality"] = c.manifest.modality;
    j["n_classes"] = c.manifest.n_classes;
    j["n_domains"] = c.manifest.n_domains;
    j["d"] = c.manifest.d;
    j["l"] = c.manifest.l;
    j["dtype"] = c.manifest.dtype;
    j["n_records"] = c.records.size();
    json jc = json::object();
    for (auto& [dom, n] : counts) jc[std::to_string(dom)] = n;
    j["per_domain_counts"] = jc;
    j["seed"] = c.manifest.seed;
    j["config_hash"] = c.manifest.config_hash;
    j["blob_checksum"] = fnv1a(blob.data(), blob.size());
    j["index_checksum"] = fnv1a(index.data(), index.size());

    write_file(fs::path(dir) / "manifest.json", j.dump(2) + "\n");
    write_file(fs::path(dir) / "data.blob", blob);
    write_file(fs::path(dir) / "index.bin", index);
}

DatasetContainer load_container(const std::string& dir) {
    fs::path base(dir);
    json j;
    try {
        j = json::parse(read_file(base / "manifest.json"));
    } catch (const json::exception& e) {
        throw DataError("manifest.json: " + std::string(e.what()));
    }
    DatasetContainer c;
    c.manifest.version = j.at("version").get<int>();
    if (c.manifest.version != 1)
        throw DataError("container version mismatch: got " +
                        std::to_string(c.manifest.version) + ", expected 1");
    c.manifest.modality = j.at("modality").get<std::string>();
    c.manifest.n_classes = j.at("n_classes").get<int>();
    c.manifest.n_domains = j.at("n_domains").get<int>();
    c.manifest.d = j.at("d").get<int64_t>();
    c.manifest.l = j.at("l").get<int64_t>();
    c.manifest.dtype = j.at("dtype").get<std::string>();
    c.manifest.seed = j.at("seed").get<uint64_t>();
    c.manifest.config_hash = j.at("config_hash").get<std::string>();
    for (auto& [k, v] : j.at("per_domain_counts").items())
        c.manifest.per_domain_counts[std::stoi(k)] = v.get<int64_t>();
    auto n_records = j.at("n_records").get<uint64_t>();

    std::string blob = read_file(base / "data.blob");
    std::string index = read_file(base / "index.bin");
    if (j.at("blob_checksum").get<uint64_t>() != fnv1a(blob.data(), blob.size()))
        throw DataError("data.blob checksum failure");
    if (j.at("index_checksum").get<uint64_t>() != fnv1a(index.data(), index.size()))
        throw DataError("index.bin checksum failure");
    if (index.size() != n_records * 16)
        throw DataError("index.bin truncated: " + std::to_string(index.size()) + " bytes for " +
                        std::to_string(n_records) + " records");
    const uint64_t sample_bytes = static_cast<uint64_t>(c.manifest.d * c.manifest.l) * 4;
    if (blob.size() != n_records * sample_bytes)
        throw DataError("data.blob truncated: " + std::to_string(blob.size()) +
                        " bytes, expected " + std::to_string(n_records * sample_bytes));

    uint64_t prev_offset = 0;
    c.records.reserve(n_records);
    for (uint64_t i = 0; i < n_records; ++i) {
        const char* e = index.data() + i * 16;
        uint64_t off = get_u64(e);
        if (i > 0 && off <= prev_offset)
            throw DataError("index.bin: offsets not strictly increasing at record " +
                            std::to_string(i));
        if (off + sample_bytes > blob.size())
            throw DataError("index.bin: record " + std::to_string(i) + " offset out of range");
        prev_offset = off;
        SampleRecord r;
        r.sample_id = static_cast<int64_t>(i);
        r.domain_id = static_cast<int>(get_u32(e + 8));
        r.label = static_cast<int>(get_u32(e + 12));
        r.input = Tensor<float>({c.manifest.d, c.manifest.l});
        for (int64_t t = 0; t < r.input.numel(); ++t)
            r.input[t] = get_f32(blob.data() + off + static_cast<uint64_t>(t) * 4);
        c.records.push_back(std::move(r));
    }
    c.validate();
    return c;
}

std::pair<std::vector<int64_t>, std::vector<int64_t>> split_train_val(
    const DatasetContainer& c, const std::vector<int64_t>& ids, double fraction, uint64_t seed) {
    if (fraction <= 0.0 || fraction >= 1.0)
        throw DataError("split_train_val: fraction must be in (0, 1)");
    std::map<std::pair<int, int>, std::vector<int64_t>> strata;
    for (int64_t id : ids) {
        const auto& r = c.records[static_cast<size_t>(id)];
        strata[{r.domain_id, r.label}].push_back(id);
    }
    std::vector<int64_t> train, val, singletons;
    for (auto& [key, members] : strata) {
        if (members.size() < 2) {
            singletons.insert(singletons.end(), members.begin(), members.end());
            continue;
        }
        Rng rng(Rng::mix(seed, static_cast<uint64_t>(key.first), static_cast<uint64_t>(key.second)));
        rng.shuffle(members.begin(), members.end());
        auto n_val = static_cast<size_t>(std::llround(fraction * static_cast<double>(members.size())));
        n_val = std::min(std::max<size_t>(n_val, 1), members.size() - 1);
        val.insert(val.end(), members.begin(), members.begin() + static_cast<int64_t>(n_val));
        train.insert(train.end(), members.begin() + static_cast<int64_t>(n_val), members.end());
    }
    if (!singletons.empty()) {
        std::cerr << "warning: " << singletons.size()
                  << " (domain, class) strata have < 2 samples; falling back to a pooled "
                     "proportional split for them\n";
        Rng rng(Rng::mix(seed, 0x51161e70, singletons.size()));
        rng.shuffle(singletons.begin(), singletons.end());
        auto n_val = static_cast<size_t>(std::llround(fraction * static_cast<double>(singletons.size())));
        for (size_t i = 0; i < singletons.size(); ++i)
            (i < n_val ? val : train).push_back(singletons[i]);
    }
    std::sort(train.begin(), train.end());
    std::sort(val.begin(), val.end());
    return {train, val};
}

std::vector<LodoFold> lodo_folds(const DatasetContainer& c, double val_fraction, uint64_t seed) {
    auto domains = c.domain_ids();
    if (domains.size() < 2)
        throw DataError("lodo_folds: need >= 2 domains, container has " +
                        std::to_string(domains.size()));
    std::vector<LodoFold> folds;
    for (int target : domains) {
        LodoFold f;
        f.target_domain = target;
        std::vector<int64_t> source_ids;
        for (const auto& r : c.records) {
            if (r.domain_id == target)
                f.test_ids.push_back(r.sample_id);
            else
                source_ids.push_back(r.sample_id);
        }
        for (int d : domains)
            if (d != target) f.source_domains.push_back(d);
        auto [train, val] = split_train_val(c, source_ids, val_fraction, seed);
        f.train_ids = std::move(train);
        f.val_ids = std::move(val);
        folds.push_back(std::move(f));
    }
    return folds;
}

BalancedBatchSampler::BalancedBatchSampler(const DatasetContainer& c,
                                           const std::vector<int64_t>& train_ids,
                                           const std::vector<int>& source_domains,
                                           int64_t batch_size)
    : domains_(source_domains), batch_size_(batch_size) {
    auto k = static_cast<int64_t>(source_domains.size());
    if (k < 1) throw DataError("BalancedBatchSampler: no source domains");
    if (batch_size < k)
        throw DataError("BalancedBatchSampler: batch size " + std::to_string(batch_size) +
                        " < number of source domains " + std::to_string(k));
    by_domain_.resize(source_domains.size());
    for (int64_t id : train_ids) {
        const auto& r = c.records[static_cast<size_t>(id)];
        auto it = std::find(domains_.begin(), domains_.end(), r.domain_id);
        if (it == domains_.end())
            throw DataError("BalancedBatchSampler: record " + std::to_string(id) +
                            " from non-source domain " + std::to_string(r.domain_id));
        by_domain_[static_cast<size_t>(it - domains_.begin())].push_back(id);
        ++total_;
    }
    for (size_t i = 0; i < by_domain_.size(); ++i)
        if (by_domain_[i].empty())
            throw DataError("BalancedBatchSampler: domain " + std::to_string(domains_[i]) +
                            " has no training records");
}

std::vector<DomainBatch> BalancedBatchSampler::epoch(uint64_t seed) const {
    auto k = static_cast<int64_t>(domains_.size());
    std::vector<std::vector<int64_t>> pools = by_domain_;
    for (size_t i = 0; i < pools.size(); ++i) {
        Rng rng(Rng::mix(seed, 0xba7c4, i));
        rng.shuffle(pools[i].begin(), pools[i].end());
    }
    std::vector<size_t> next(pools.size(), 0);
    const int64_t base = batch_size_ / k;
    const int64_t rem = batch_size_ % k;

    std::vector<DomainBatch> batches;
    int64_t consumed = 0, batch_index = 0;
    while (consumed < total_) {
        DomainBatch b;
        for (int64_t di = 0; di < k; ++di) {
            int64_t quota = base;
            // remainder rotates round-robin across batches
            if (rem > 0) {
                int64_t start = (batch_index * rem) % k;
                int64_t rel = (di - start + k) % k;
                if (rel < rem) quota += 1;
            }
            auto& pool = pools[static_cast<size_t>(di)];
            auto& cursor = next[static_cast<size_t>(di)];
            int64_t avail = static_cast<int64_t>(pool.size()) - static_cast<int64_t>(cursor);
            int64_t take = std::min(quota, avail);
            if (take <= 0) continue;
            int64_t begin = static_cast<int64_t>(b.ids.size());
            for (int64_t t = 0; t < take; ++t) b.ids.push_back(pool[cursor++]);
            b.ranges.push_back({domains_[static_cast<size_t>(di)], begin,
                                begin + take});
            consumed += take;
        }
        if (b.ids.empty()) break;
        batches.push_back(std::move(b));
        ++batch_index;
    }
    return batches;
}

DatasetContainer import_external(const std::string& csv_path, int64_t d, int64_t l) {
    std::ifstream f(csv_path);
    if (!f) throw DataError("cannot open " + csv_path);
    fs::path base = fs::path(csv_path).parent_path();
    DatasetContainer c;
    c.manifest.modality = "imported";
    c.manifest.d = d;
    c.manifest.l = l;
    std::string line;
    int64_t next_id = 0;
    int max_label = 0;
    std::set<int> domains;
    while (std::getline(f, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ss(line);
        std::string file, dom_s, label_s;
        if (!std::getline(ss, file, ',') || !std::getline(ss, dom_s, ',') ||
            !std::getline(ss, label_s, ','))
            throw DataError("import_external: malformed row '" + line +
                            "' (expected file,domain_id,label)");
        SampleRecord r;
        r.sample_id = next_id++;
        r.domain_id = std::stoi(dom_s);
        r.label = std::stoi(label_s);
        std::string bytes = read_file(base / file);
        if (bytes.size() != static_cast<size_t>(d * l) * 4)
            throw DataError("import_external: " + file + " has " + std::to_string(bytes.size()) +
                            " bytes, expected " + std::to_string(d * l * 4));
        r.input = Tensor<float>({d, l});
        for (int64_t i = 0; i < d * l; ++i)
            r.input[i] = get_f32(bytes.data() + static_cast<size_t>(i) * 4);
        max_label = std::max(max_label, r.label);
        domains.insert(r.domain_id);
        c.records.push_back(std::move(r));
    }
    if (c.records.empty()) throw DataError("import_external: no records in " + csv_path);
    c.manifest.n_classes = max_label;
    c.manifest.n_domains = static_cast<int>(domains.size());
    c.manifest.config_hash = "imported";
    c.validate();
    return c;
}

}  // namespace dgar::data
