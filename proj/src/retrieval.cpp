#include "risa/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include <json.hpp>

namespace risa::retr {

void DescriptorIndex::add(std::string id, std::string label,
                          std::vector<double> descriptor) {
  if (frozen_) fail(ErrorCode::ShapeMismatch, "index is frozen");
  if (!descriptors_.empty() && descriptors_.front().size() != descriptor.size())
    fail(ErrorCode::ShapeMismatch, "descriptor width mismatch for " + id);
  ids_.push_back(std::move(id));
  labels_.push_back(std::move(label));
  descriptors_.push_back(std::move(descriptor));
}

void DescriptorIndex::freeze() { frozen_ = true; }

namespace {

double euclidean(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

}  // namespace

RankedList query(const DescriptorIndex& index, const std::vector<double>& q,
                 const std::string& q_id) {
  if (!index.frozen() || index.size() == 0)
    fail(ErrorCode::EmptyIndex, "query needs a frozen, non-empty index");
  RankedList out;
  out.reserve(index.size());
  for (size_t i = 0; i < index.size(); ++i) {
    if (index.ids()[i] == q_id) continue;
    out.push_back({index.ids()[i], index.labels()[i],
                   euclidean(index.descriptors()[i], q)});
  }
  if (out.empty())
    fail(ErrorCode::EmptyIndex, "index only contains the query itself");
  std::sort(out.begin(), out.end(), [](const RankedItem& a, const RankedItem& b) {
    if (a.distance != b.distance) return a.distance < b.distance;
    return a.id < b.id;
  });
  return out;
}

MetricSet metrics_for_ranked(const std::vector<char>& relevant, int k) {
  MetricSet m;
  if (k <= 0 || relevant.empty()) return m;
  const int n = static_cast<int>(relevant.size());

  m.nn = relevant[0] ? 1.0 : 0.0;
  int hits = 0, hits_ft = 0, hits_st = 0;
  double dcg = 0.0, ap = 0.0;
  for (int r = 1; r <= n; ++r) {
    if (!relevant[r - 1]) continue;
    ++hits;
    if (r <= k) ++hits_ft;
    if (r <= 2 * k) ++hits_st;
    dcg += 1.0 / std::log2(static_cast<double>(r) + 1.0);
    ap += static_cast<double>(hits) / r;
  }
  double idcg = 0.0;
  for (int r = 1; r <= k; ++r)
    idcg += 1.0 / std::log2(static_cast<double>(r) + 1.0);
  m.ft = static_cast<double>(hits_ft) / k;
  m.st = static_cast<double>(hits_st) / k;
  m.ndcg = idcg > 0 ? dcg / idcg : 0.0;
  m.map = ap / k;
  return m;
}

namespace {

struct PerQuery {
  std::string label;
  MetricSet metrics;
};

// K = sub-class size in the pool minus one when the query is pooled; queries
// without any relevant candidate are skipped and tallied.
std::vector<PerQuery> per_query_metrics(const DescriptorIndex& pool,
                                        const std::vector<QueryItem>& queries,
                                        int* skipped) {
  if (queries.empty()) fail(ErrorCode::EmptyQuerySet, "no queries");
  std::map<std::string, int> pool_class_size;
  for (const auto& l : pool.labels()) ++pool_class_size[l];
  std::map<std::string, int> pool_has_id;
  for (const auto& id : pool.ids()) ++pool_has_id[id];

  std::vector<PerQuery> out;
  *skipped = 0;
  for (const auto& q : queries) {
    auto it = pool_class_size.find(q.label);
    int members = it == pool_class_size.end() ? 0 : it->second;
    int k = members - (pool_has_id.count(q.id) ? 1 : 0);
    if (k <= 0) {
      ++*skipped;
      continue;
    }
    RankedList ranked = query(pool, q.descriptor, q.id);
    std::vector<char> rel(ranked.size());
    for (size_t i = 0; i < ranked.size(); ++i)
      rel[i] = ranked[i].label == q.label;
    out.push_back({q.label, metrics_for_ranked(rel, k)});
  }
  if (out.empty())
    fail(ErrorCode::EmptyQuerySet, "every query was skipped");
  return out;
}

MetricSet mean_of(const std::vector<MetricSet>& sets) {
  MetricSet m;
  for (const auto& s : sets) {
    m.nn += s.nn;
    m.ft += s.ft;
    m.st += s.st;
    m.ndcg += s.ndcg;
    m.map += s.map;
  }
  double inv = sets.empty() ? 0.0 : 1.0 / static_cast<double>(sets.size());
  m.nn *= inv;
  m.ft *= inv;
  m.st *= inv;
  m.ndcg *= inv;
  m.map *= inv;
  return m;
}

}  // namespace

EvalReport evaluate(const DescriptorIndex& pool,
                    const std::vector<QueryItem>& queries) {
  EvalReport report;
  auto per_query = per_query_metrics(pool, queries, &report.skipped_queries);
  report.evaluated_queries = static_cast<int>(per_query.size());

  std::vector<MetricSet> all;
  std::map<std::string, std::vector<MetricSet>> by_class;
  for (const auto& pq : per_query) {
    all.push_back(pq.metrics);
    by_class[pq.label].push_back(pq.metrics);
  }
  report.micro = mean_of(all);

  std::vector<MetricSet> class_means;
  for (const auto& [label, sets] : by_class) class_means.push_back(mean_of(sets));
  report.macro = mean_of(class_means);
  return report;
}

std::vector<std::pair<double, double>> pr_curve(
    const DescriptorIndex& pool, const std::vector<QueryItem>& queries) {
  if (queries.empty()) fail(ErrorCode::EmptyQuerySet, "no queries");
  std::map<std::string, int> pool_class_size;
  for (const auto& l : pool.labels()) ++pool_class_size[l];
  std::map<std::string, int> pool_has_id;
  for (const auto& id : pool.ids()) ++pool_has_id[id];

  std::vector<double> sums(101, 0.0);
  int used = 0;
  for (const auto& q : queries) {
    auto it = pool_class_size.find(q.label);
    int members = it == pool_class_size.end() ? 0 : it->second;
    int k = members - (pool_has_id.count(q.id) ? 1 : 0);
    if (k <= 0) continue;
    RankedList ranked = query(pool, q.descriptor, q.id);
    const int n = static_cast<int>(ranked.size());
    std::vector<double> recall(n), precision(n);
    int hits = 0;
    for (int r = 1; r <= n; ++r) {
      if (ranked[r - 1].label == q.label) ++hits;
      recall[r - 1] = static_cast<double>(hits) / k;
      precision[r - 1] = static_cast<double>(hits) / r;
    }
    for (int level = 0; level <= 100; ++level) {
      double g = level / 100.0;
      double best = 0.0;
      for (int r = 0; r < n; ++r)
        if (recall[r] >= g - 1e-12) best = std::max(best, precision[r]);
      sums[level] += best;
    }
    ++used;
  }
  if (used == 0) fail(ErrorCode::EmptyQuerySet, "every query was skipped");

  std::vector<std::pair<double, double>> curve;
  curve.reserve(101);
  for (int level = 0; level <= 100; ++level)
    curve.emplace_back(level / 100.0, sums[level] / used);
  return curve;
}

void write_pr_csv(const std::vector<std::pair<double, double>>& curve,
                  const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::IoError, "cannot open " + path.string());
  out << "recall,precision\n";
  char buf[80];
  for (const auto& [r, p] : curve) {
    std::snprintf(buf, sizeof(buf), "%.2f,%.17g\n", r, p);
    out << buf;
  }
}

TierImage tier_image(const DescriptorIndex& pool) {
  if (!pool.frozen() || pool.size() == 0)
    fail(ErrorCode::EmptyIndex, "tier image needs a frozen, non-empty index");
  const int n = static_cast<int>(pool.size());

  // Pool order: grouped by sub-class, then by id.
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (pool.labels()[a] != pool.labels()[b])
      return pool.labels()[a] < pool.labels()[b];
    return pool.ids()[a] < pool.ids()[b];
  });
  std::map<std::string, int> class_size;
  for (const auto& l : pool.labels()) ++class_size[l];

  // Gridline after the last row/column of each sub-class except the final one.
  std::vector<int> cell(n);  // item position -> pixel row/col
  int cursor = 0;
  for (int i = 0; i < n; ++i) {
    cell[i] = cursor++;
    bool boundary = i + 1 < n && pool.labels()[order[i]] != pool.labels()[order[i + 1]];
    if (boundary) ++cursor;
  }
  const int side = cursor;

  TierImage img;
  img.items = n;
  img.side = side;
  img.rgb.assign(static_cast<size_t>(side) * side * 3, 255);

  auto put = [&](int row, int col, uint8_t r, uint8_t g, uint8_t b) {
    size_t off = 3 * (static_cast<size_t>(row) * side + col);
    img.rgb[off] = r;
    img.rgb[off + 1] = g;
    img.rgb[off + 2] = b;
  };
  for (int row = 0; row < side; ++row) {
    bool row_is_line =
        std::find(cell.begin(), cell.end(), row) == cell.end();
    for (int col = 0; col < side; ++col) {
      bool col_is_line =
          std::find(cell.begin(), cell.end(), col) == cell.end();
      if (row_is_line || col_is_line) put(row, col, 128, 128, 128);
    }
  }

  std::map<std::string, int> id_to_pos;
  for (int i = 0; i < n; ++i) id_to_pos[pool.ids()[order[i]]] = i;

  for (int j = 0; j < n; ++j) {
    int item = order[j];
    int k = class_size[pool.labels()[item]] - 1;
    RankedList ranked =
        query(pool, pool.descriptors()[item], pool.ids()[item]);
    for (size_t r = 0; r < ranked.size(); ++r) {
      int i = id_to_pos.at(ranked[r].id);
      if (r == 0)
        put(cell[j], cell[i], 0, 0, 0);  // nearest neighbor
      else if (static_cast<int>(r) < k)
        put(cell[j], cell[i], 255, 0, 0);  // first tier
      else if (static_cast<int>(r) < 2 * k)
        put(cell[j], cell[i], 0, 0, 255);  // second tier
    }
  }
  return img;
}

void write_ppm(const TierImage& image, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::IoError, "cannot open " + path.string());
  out << "P6\n" << image.side << ' ' << image.side << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.rgb.data()),
            static_cast<std::streamsize>(image.rgb.size()));
}

std::string metrics_json(const EvalReport& report) {
  nlohmann::json j;
  auto fill = [](const MetricSet& m) {
    return nlohmann::json{{"NN", m.nn},
                          {"FT", m.ft},
                          {"ST", m.st},
                          {"NDCG", m.ndcg},
                          {"mAP", m.map}};
  };
  j["micro"] = fill(report.micro);
  j["macro"] = fill(report.macro);
  j["skipped_queries"] = report.skipped_queries;
  j["evaluated_queries"] = report.evaluated_queries;
  return j.dump(2);
}

void write_descriptors(const DescriptorIndex& index,
                       const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::IoError, "cannot open " + path.string());
  size_t width = index.size() ? index.descriptors().front().size() : 0;
  out << "id,label";
  for (size_t d = 0; d < width; ++d) out << ",d_" << d;
  out << '\n';
  char buf[32];
  for (size_t i = 0; i < index.size(); ++i) {
    out << index.ids()[i] << ',' << index.labels()[i];
    for (double v : index.descriptors()[i]) {
      std::snprintf(buf, sizeof(buf), ",%.17g", v);
      out << buf;
    }
    out << '\n';
  }
}

DescriptorIndex read_descriptors(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::FileNotFound, path.string());
  std::string line;
  if (!std::getline(in, line))
    fail(ErrorCode::IoError, path.string() + " is empty");
  if (line.rfind("id,label", 0) != 0)
    fail(ErrorCode::IoError, path.string() + " has an unexpected header");
  DescriptorIndex index;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string id, label, tok;
    if (!std::getline(ss, id, ',') || !std::getline(ss, label, ','))
      fail(ErrorCode::IoError, "malformed descriptor row");
    std::vector<double> vec;
    while (std::getline(ss, tok, ',')) vec.push_back(std::stod(tok));
    index.add(id, label, std::move(vec));
  }
  index.freeze();
  return index;
}

}  // namespace risa::retr
