#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <map>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "aread/rng.hpp"

namespace aread {

// One interaction: categorical feature ids, a domain indicator, binary label.
struct Sample {
  std::vector<int> features;
  int domain_id = 0;
  int label = 0;
};

struct SchemaSpec {
  std::vector<std::string> fields;  // feature columns, in order
  std::string item_field = "item";
  std::string user_field = "user";
  std::string domain_col = "domain";
  std::string label_col = "label";
};

// Ordered field names plus per-field first-seen-order vocabularies.
// Index 0 of every field is reserved for out-of-vocabulary values, so ids
// assigned during loading start at 1.
struct Schema {
  SchemaSpec spec;
  std::vector<std::map<std::string, int>> vocab;  // per field: value -> id
  std::vector<int> vocab_size;                    // includes the OOV slot
  int domain_count = 0;
  bool frozen = false;  // frozen: unseen values map to OOV instead of growing

  int field_index(const std::string& name) const {
    for (size_t i = 0; i < spec.fields.size(); ++i)
      if (spec.fields[i] == name) return int(i);
    return -1;
  }
  int item_index() const { return field_index(spec.item_field); }
  int user_index() const { return field_index(spec.user_field); }

  int encode(int field, const std::string& value) {
    auto it = vocab[field].find(value);
    if (it != vocab[field].end()) return it->second;
    if (frozen) return 0;
    int id = vocab_size[field]++;
    vocab[field].emplace(value, id);
    return id;
  }

  // inverse lookup; OOV decodes to an empty string
  std::string decode(int field, int id) const {
    for (const auto& [v, i] : vocab[field])
      if (i == id) return v;
    return "";
  }
};

enum class SplitTag { Train, Valid, Test };

inline const char* split_name(SplitTag t) {
  switch (t) {
    case SplitTag::Train: return "train";
    case SplitTag::Valid: return "valid";
    case SplitTag::Test: return "test";
  }
  return "?";
}

struct Dataset {
  std::shared_ptr<Schema> schema;
  std::vector<Sample> samples;
  SplitTag split_tag = SplitTag::Train;

  size_t size() const { return samples.size(); }
  int item_of(const Sample& s) const {
    return s.features[schema->item_index()];
  }
  int user_of(const Sample& s) const {
    return s.features[schema->user_index()];
  }
};

// Per-domain sample counts with the major/minor classification.
struct DomainStats {
  std::vector<long> counts;
  std::vector<double> fractions;
  std::vector<int> major_set;  // fraction >= minor_threshold
  std::vector<int> minor_set;
  double minor_threshold = 0.02;

  int domain_count() const { return int(counts.size()); }
  bool is_minor(int d) const {
    return std::find(minor_set.begin(), minor_set.end(), d) != minor_set.end();
  }
};

namespace detail {
inline std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

inline bool is_nonneg_int(const std::string& s) {
  if (s.empty()) return false;
  for (char c : s)
    if (c < '0' || c > '9') return false;
  return true;
}
}  // namespace detail

// Loads a UTF-8 comma-separated file with a header row. One column per
// feature field, plus a domain column and a binary label column. Domain
// values that are all plain non-negative integers are used directly as
// domain ids; otherwise they are encoded in first-seen order.
inline Dataset load_csv(const std::string& path, const SchemaSpec& spec,
                        std::shared_ptr<Schema> frozen_schema = nullptr) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("load_csv: cannot open " + path);

  std::string line;
  if (!std::getline(f, line))
    throw std::runtime_error("load_csv: empty file " + path);
  std::vector<std::string> header = detail::split_line(line);

  auto col_of = [&](const std::string& name) {
    for (size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return int(i);
    throw std::runtime_error("load_csv: missing column '" + name + "' in " +
                             path);
  };

  std::vector<int> field_cols;
  for (const auto& fname : spec.fields) field_cols.push_back(col_of(fname));
  int domain_col = col_of(spec.domain_col);
  int label_col = col_of(spec.label_col);
  if (spec.fields.empty())
    throw std::runtime_error("load_csv: schema has no feature fields");

  Dataset ds;
  if (frozen_schema) {
    ds.schema = std::move(frozen_schema);
  } else {
    ds.schema = std::make_shared<Schema>();
    ds.schema->spec = spec;
    ds.schema->vocab.resize(spec.fields.size());
    ds.schema->vocab_size.assign(spec.fields.size(), 1);  // OOV slot
  }
  Schema& schema = *ds.schema;

  std::map<std::string, int> domain_enc;
  bool domains_numeric = true;
  std::vector<std::string> raw_domains;

  long row = 1;
  while (std::getline(f, line)) {
    ++row;
    if (line.empty()) continue;
    std::vector<std::string> cells = detail::split_line(line);
    if (cells.size() != header.size())
      throw std::runtime_error("load_csv: malformed row " +
                               std::to_string(row) + " in " + path + " (" +
                               std::to_string(cells.size()) + " of " +
                               std::to_string(header.size()) + " columns)");
    Sample s;
    s.features.reserve(field_cols.size());
    for (size_t i = 0; i < field_cols.size(); ++i)
      s.features.push_back(schema.encode(int(i), cells[field_cols[i]]));
    const std::string& lab = cells[label_col];
    if (lab != "0" && lab != "1")
      throw std::runtime_error("load_csv: row " + std::to_string(row) +
                               ": label must be 0 or 1, got '" + lab + "'");
    s.label = lab == "1" ? 1 : 0;
    const std::string& dv = cells[domain_col];
    if (!detail::is_nonneg_int(dv)) domains_numeric = false;
    raw_domains.push_back(dv);
    ds.samples.push_back(std::move(s));
  }

  for (size_t i = 0; i < ds.samples.size(); ++i) {
    const std::string& dv = raw_domains[i];
    int d;
    if (domains_numeric) {
      d = std::stoi(dv);
    } else {
      auto it = domain_enc.find(dv);
      if (it == domain_enc.end())
        it = domain_enc.emplace(dv, int(domain_enc.size())).first;
      d = it->second;
    }
    ds.samples[i].domain_id = d;
    schema.domain_count = std::max(schema.domain_count, d + 1);
  }
  return ds;
}

inline void save_csv(const Dataset& ds, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("save_csv: cannot write " + path);
  const Schema& sc = *ds.schema;
  for (size_t i = 0; i < sc.spec.fields.size(); ++i)
    f << sc.spec.fields[i] << ",";
  f << sc.spec.domain_col << "," << sc.spec.label_col << "\n";
  for (const Sample& s : ds.samples) {
    for (size_t i = 0; i < s.features.size(); ++i) {
      std::string v = sc.decode(int(i), s.features[i]);
      f << (v.empty() ? "oov" : v) << ",";
    }
    f << s.domain_id << "," << s.label << "\n";
  }
  if (!f) throw std::runtime_error("save_csv: write failed " + path);
}

inline DomainStats compute_stats(const Dataset& ds,
                                 double minor_threshold = 0.02) {
  if (ds.samples.empty())
    throw std::invalid_argument("compute_stats: empty dataset");
  DomainStats st;
  st.minor_threshold = minor_threshold;
  int D = ds.schema ? ds.schema->domain_count : 0;
  for (const Sample& s : ds.samples) D = std::max(D, s.domain_id + 1);
  st.counts.assign(size_t(D), 0);
  for (const Sample& s : ds.samples) st.counts[s.domain_id]++;
  double total = double(ds.samples.size());
  st.fractions.resize(size_t(D));
  for (int d = 0; d < D; ++d) {
    st.fractions[d] = double(st.counts[d]) / total;
    if (st.fractions[d] >= minor_threshold)
      st.major_set.push_back(d);
    else
      st.minor_set.push_back(d);
  }
  return st;
}

// Stratified train/valid/test split. Per-domain split sizes are exact
// (floor for train and valid, remainder to test); within a domain the two
// label classes are apportioned across splits by largest remainder, so
// per-stratum label ratios hold within one sample. Domains with fewer
// samples than splits go entirely to train.
inline std::array<Dataset, 3> split(const Dataset& ds, double r_train,
                                    double r_valid, double r_test,
                                    uint64_t seed,
                                    std::vector<std::string>* warnings =
                                        nullptr) {
  if (!(r_train > 0 && r_valid > 0 && r_test > 0) ||
      std::abs(r_train + r_valid + r_test - 1.0) > 1e-9)
    throw std::invalid_argument("split: ratios must be positive and sum to 1");

  int D = ds.schema->domain_count;
  // (domain, label) buckets of sample indices
  std::vector<std::array<std::vector<size_t>, 2>> buckets{size_t(D)};
  for (size_t i = 0; i < ds.samples.size(); ++i)
    buckets[ds.samples[i].domain_id][ds.samples[i].label].push_back(i);

  std::array<Dataset, 3> out;
  for (int k = 0; k < 3; ++k) {
    out[k].schema = ds.schema;
    out[k].split_tag = SplitTag(k);
  }

  Rng rng = Rng::substream(seed, "data-split");

  for (int d = 0; d < D; ++d) {
    long n = long(buckets[d][0].size() + buckets[d][1].size());
    if (n == 0) continue;
    if (n < 3) {
      if (warnings)
        warnings->push_back("split: domain " + std::to_string(d) + " has " +
                            std::to_string(n) +
                            " samples; assigning all to train");
      for (int y = 0; y < 2; ++y)
        for (size_t i : buckets[d][y])
          out[0].samples.push_back(ds.samples[i]);
      continue;
    }
    long s_sz[3];
    s_sz[0] = long(r_train * double(n));
    s_sz[1] = long(r_valid * double(n));
    s_sz[2] = n - s_sz[0] - s_sz[1];

    // apportion label 1 across the three splits by largest remainder,
    // capped by split sizes; label 0 fills the rest
    long c1 = long(buckets[d][1].size());
    long t1[3];
    double frac[3];
    long used = 0;
    for (int k = 0; k < 3; ++k) {
      double exact = double(c1) * double(s_sz[k]) / double(n);
      t1[k] = long(exact);
      frac[k] = exact - double(t1[k]);
      used += t1[k];
    }
    while (used < c1) {
      int best = -1;
      for (int k = 0; k < 3; ++k)
        if (t1[k] < s_sz[k] && (best < 0 || frac[k] > frac[best])) best = k;
      t1[best] += 1;
      frac[best] = -1.0;
      ++used;
    }
    for (int k = 0; k < 3; ++k) t1[k] = std::min(t1[k], s_sz[k]);

    std::vector<size_t> b0 = buckets[d][0], b1 = buckets[d][1];
    rng.shuffle(b0);
    rng.shuffle(b1);
    size_t p0 = 0, p1 = 0;
    for (int k = 0; k < 3; ++k) {
      long take1 = std::min<long>(t1[k], long(b1.size() - p1));
      long take0 = std::min<long>(s_sz[k] - take1, long(b0.size() - p0));
      for (long i = 0; i < take1; ++i)
        out[k].samples.push_back(ds.samples[b1[p1++]]);
      for (long i = 0; i < take0; ++i)
        out[k].samples.push_back(ds.samples[b0[p0++]]);
    }
    // any leftovers from cap interactions land in train
    while (p1 < b1.size()) out[0].samples.push_back(ds.samples[b1[p1++]]);
    while (p0 < b0.size()) out[0].samples.push_back(ds.samples[b0[p0++]]);
  }
  return out;
}

}  // namespace aread
