#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "risa/error.hpp"

namespace risa::retr {

// Frozen bag of (id, label, descriptor) rows used as the retrieval pool.
class DescriptorIndex {
 public:
  void add(std::string id, std::string label, std::vector<double> descriptor);
  void freeze();
  bool frozen() const { return frozen_; }
  size_t size() const { return ids_.size(); }

  const std::vector<std::string>& ids() const { return ids_; }
  const std::vector<std::string>& labels() const { return labels_; }
  const std::vector<std::vector<double>>& descriptors() const {
    return descriptors_;
  }

 private:
  std::vector<std::string> ids_;
  std::vector<std::string> labels_;
  std::vector<std::vector<double>> descriptors_;
  bool frozen_ = false;
};

struct RankedItem {
  std::string id;
  std::string label;
  double distance;
};
using RankedList = std::vector<RankedItem>;

// Exhaustive Euclidean ranking, ascending distance, ties broken by id.
// An indexed row with the query's id is excluded.
RankedList query(const DescriptorIndex& index, const std::vector<double>& q,
                 const std::string& q_id);

struct MetricSet {
  double nn = 0, ft = 0, st = 0, ndcg = 0, map = 0;
};

// Per-query tier metrics from a binary relevance sequence with K relevant
// candidates. Exposed so independent checks can feed hand-built rankings.
MetricSet metrics_for_ranked(const std::vector<char>& relevant, int k);

struct QueryItem {
  std::string id;
  std::string label;
  std::vector<double> descriptor;
};

struct EvalReport {
  MetricSet micro, macro;
  int skipped_queries = 0;
  int evaluated_queries = 0;
};

EvalReport evaluate(const DescriptorIndex& pool,
                    const std::vector<QueryItem>& queries);

// Interpolated precision at recall 0.00 .. 1.00 (101 points), averaged over
// queries.
std::vector<std::pair<double, double>> pr_curve(
    const DescriptorIndex& pool, const std::vector<QueryItem>& queries);

void write_pr_csv(const std::vector<std::pair<double, double>>& curve,
                  const std::filesystem::path& path);

// Square tier matrix over the pool, rows = queries ordered by sub-class:
// black = nearest neighbor, red = first-tier match, blue = second-tier match,
// white otherwise, gray gridlines between sub-class groups.
struct TierImage {
  int items = 0;  // pool size
  int side = 0;   // items + gridlines
  std::vector<uint8_t> rgb;

  const uint8_t* pixel(int row, int col) const {
    return &rgb[3 * (static_cast<size_t>(row) * side + col)];
  }
};

TierImage tier_image(const DescriptorIndex& pool);
void write_ppm(const TierImage& image, const std::filesystem::path& path);

std::string metrics_json(const EvalReport& report);

// Descriptor table CSV: header id,label,d_0..d_{n-1}; full double precision.
void write_descriptors(const DescriptorIndex& index,
                       const std::filesystem::path& path);
DescriptorIndex read_descriptors(const std::filesystem::path& path);

}  // namespace risa::retr
