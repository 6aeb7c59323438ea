#ifndef GSPPCA_METRICS_HPP
#define GSPPCA_METRICS_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <numeric>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "gsppca/error.hpp"
#include "gsppca/evidence.hpp"
#include "gsppca/linalg.hpp"
#include "gsppca/selection.hpp"
#include "gsppca/special.hpp"

namespace gsppca {

/// Harmonic mean of precision and recall; 0 when either support or the
/// intersection is empty.
inline double f_score(const SupportVector& predicted, const SupportVector& truth) {
  if (predicted.size() != truth.size()) throw ArgumentError("f_score: length mismatch");
  Index both = 0;
  for (Index j = 0; j < truth.size(); ++j) both += (predicted[j] && truth[j]) ? 1 : 0;
  if (both == 0) return 0.0;
  const double prec = static_cast<double>(both) / static_cast<double>(predicted.q());
  const double rec = static_cast<double>(both) / static_cast<double>(truth.q());
  return 2.0 * prec * rec / (prec + rec);
}

/// Fraction of Tr(X^T X) captured by the top-d principal subspace of X_v.
inline double explained_variance(const DataMatrix& x, const SupportVector& support, int d) {
  const auto r = renormalize(x, support, d);
  const double total = x.values.squaredNorm();
  if (!(total > 0.0)) throw DataError("explained_variance: data matrix is zero");
  const double captured = r.variances.sum() * static_cast<double>(x.n());
  return std::clamp(captured / total, 0.0, 1.0);
}

namespace detail {

inline double log_choose(std::int64_t a, std::int64_t b) {
  return log_gamma(static_cast<double>(a) + 1.0) - log_gamma(static_cast<double>(b) + 1.0) -
         log_gamma(static_cast<double>(a - b) + 1.0);
}

}  // namespace detail

/// P(X >= overlap) for X ~ Hypergeometric(pop, pathway_size, selected).
///
/// One log-pmf anchor (at the larger of overlap and the mode) is computed
/// from log-Gamma values; every other term follows from the pmf ratio
/// recurrence, so all summed terms are at most 1 relative to the anchor.
inline double hypergeom_sf(std::int64_t overlap, std::int64_t pop, std::int64_t pathway_size,
                           std::int64_t selected) {
  if (pop < 0 || pathway_size < 0 || selected < 0 || overlap < 0 || pathway_size > pop ||
      selected > pop || overlap > std::min(pathway_size, selected))
    throw ArgumentError("hypergeom_sf: inconsistent counts");
  const std::int64_t big_k = pathway_size, n = selected, big_n = pop;
  const std::int64_t lower = std::max<std::int64_t>(0, n + big_k - big_n);
  const std::int64_t upper = std::min(big_k, n);
  if (overlap <= lower) return 1.0;
  const std::int64_t mode = (n + 1) * (big_k + 1) / (big_n + 2);
  const std::int64_t anchor = std::min(std::max(overlap, mode), upper);
  const double log_anchor = detail::log_choose(big_k, anchor) +
                            detail::log_choose(big_n - big_k, n - anchor) -
                            detail::log_choose(big_n, n);
  double sum = 1.0, term = 1.0;
  for (std::int64_t x = anchor; x < upper; ++x) {
    term *= static_cast<double>((big_k - x) * (n - x)) /
            static_cast<double>((x + 1) * (big_n - big_k - n + x + 1));
    sum += term;
    if (term < 1e-18 * sum) break;
  }
  term = 1.0;
  for (std::int64_t x = anchor; x > overlap; --x) {
    term *= static_cast<double>(x * (big_n - big_k - n + x)) /
            static_cast<double>((big_k - x + 1) * (n - x + 1));
    sum += term;
  }
  return std::min(1.0, std::exp(log_anchor) * sum);
}

/// Benjamini-Hochberg step-up adjustment, returned in input order.
inline std::vector<double> bh_adjust(const std::vector<double>& pvalues) {
  for (double v : pvalues)
    if (!(v >= 0.0 && v <= 1.0)) throw ArgumentError("bh_adjust: p-values must lie in [0, 1]");
  const std::size_t m = pvalues.size();
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return pvalues[a] < pvalues[b]; });
  std::vector<double> out(m);
  double running = 1.0;
  for (std::size_t r = m; r-- > 0;) {
    const std::size_t i = order[r];
    running = std::min(running, std::min(1.0, static_cast<double>(m) * pvalues[i] / static_cast<double>(r + 1)));
    out[i] = running;
  }
  return out;
}

struct GeneSet {
  std::string name;
  std::string description;
  std::vector<Index> members;  ///< sorted, unique variable indices
};

struct GeneSetCollection {
  Index universe_size = 0;
  std::vector<GeneSet> sets;
  std::size_t dropped_sets = 0;  ///< sets with no member among the variables

  void validate() const {
    for (const auto& s : sets) {
      if (s.members.empty()) throw ArgumentError("gene set '" + s.name + "' is empty");
      for (Index j : s.members)
        if (j < 0 || j >= universe_size)
          throw ArgumentError("gene set '" + s.name + "' has an index outside the universe");
    }
  }
};

/// Reads a GMT stream (name TAB description TAB member...) and maps member
/// identifiers to column indices through `names`. Unknown identifiers are
/// ignored; sets left empty are dropped and counted.
inline GeneSetCollection parse_gmt(std::istream& in, const std::vector<std::string>& names) {
  std::unordered_map<std::string, Index> index;
  for (std::size_t j = 0; j < names.size(); ++j)
    if (!index.emplace(names[j], static_cast<Index>(j)).second)
      throw DataError("variable names: duplicate identifier '" + names[j] + "'");
  GeneSetCollection out;
  out.universe_size = static_cast<Index>(names.size());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, '\t')) fields.push_back(f);
    if (fields.size() < 2) throw DataError("GMT line " + std::to_string(lineno) + ": expected name and description");
    GeneSet set{fields[0], fields[1], {}};
    for (std::size_t t = 2; t < fields.size(); ++t) {
      if (fields[t].empty()) continue;
      if (auto it = index.find(fields[t]); it != index.end()) set.members.push_back(it->second);
    }
    std::sort(set.members.begin(), set.members.end());
    set.members.erase(std::unique(set.members.begin(), set.members.end()), set.members.end());
    if (set.members.empty())
      ++out.dropped_sets;
    else
      out.sets.push_back(std::move(set));
  }
  return out;
}

struct SetEnrichment {
  std::string name;
  Index size = 0;
  Index overlap = 0;
  double pvalue = 1.0;
  double adjusted = 1.0;
  bool enriched = false;
};

struct PeiResult {
  double pei = 0.0;
  std::vector<SetEnrichment> sets;
};

/// Pathway enrichment index: share of sets whose BH-adjusted hypergeometric
/// p-value is at most `threshold`.
inline PeiResult pei(const std::vector<Index>& selection, const GeneSetCollection& collection,
                     double threshold = 0.01) {
  if (collection.sets.empty()) throw ArgumentError("pei: empty gene-set collection");
  collection.validate();
  std::vector<std::uint8_t> chosen(static_cast<std::size_t>(collection.universe_size), 0);
  for (Index j : selection) {
    if (j < 0 || j >= collection.universe_size) throw ArgumentError("pei: selection index outside the universe");
    chosen[static_cast<std::size_t>(j)] = 1;
  }
  const std::int64_t selected = std::count(chosen.begin(), chosen.end(), std::uint8_t{1});
  PeiResult out;
  std::vector<double> raw;
  for (const auto& s : collection.sets) {
    SetEnrichment e;
    e.name = s.name;
    e.size = static_cast<Index>(s.members.size());
    for (Index j : s.members) e.overlap += chosen[static_cast<std::size_t>(j)];
    e.pvalue = hypergeom_sf(e.overlap, collection.universe_size, e.size, selected);
    raw.push_back(e.pvalue);
    out.sets.push_back(std::move(e));
  }
  const auto adj = bh_adjust(raw);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < adj.size(); ++i) {
    out.sets[i].adjusted = adj[i];
    out.sets[i].enriched = adj[i] <= threshold;
    hits += out.sets[i].enriched ? 1 : 0;
  }
  out.pei = static_cast<double>(hits) / static_cast<double>(adj.size());
  return out;
}

inline PeiResult pei(const SupportVector& selection, const GeneSetCollection& collection,
                     double threshold = 0.01) {
  if (selection.size() != collection.universe_size) throw ArgumentError("pei: selection length differs from the universe");
  return pei(selection.active(), collection, threshold);
}

}  // namespace gsppca

#endif  // GSPPCA_METRICS_HPP
