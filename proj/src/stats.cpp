#include "bartr/stats.hpp"

#include <algorithm>
#include <boost/math/distributions/fisher_f.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "bartr/error.hpp"
#include "bartr/log.hpp"

namespace bartr {

void AautRecord::validate() const {
  if (tasks.size() != kAautTasks)
    throw ValidationError("AAUT record needs " + std::to_string(kAautTasks) + " tasks, got " +
                          std::to_string(tasks.size()));
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const auto& t = tasks[i];
    const std::string where = "AAUT task " + std::to_string(i + 1);
    if ((t.spontaneous != 0 && t.spontaneous != 1) || (t.constrained != 0 && t.constrained != 1))
      throw ValidationError(where + ": AOU must be 0 or 1");
    if (t.qom) {
      if (*t.qom < 0 || *t.qom > 5) throw ValidationError(where + ": QOM must be in 0..5");
      if (t.spontaneous != 1) throw ValidationError(where + ": QOM given without spontaneous use");
    }
  }
}

double score_aaut(const AautRecord& rec) {
  rec.validate();
  double sum = 0.0;
  for (const auto& t : rec.tasks) sum += t.constrained - t.spontaneous;
  return sum / static_cast<double>(kAautTasks);
}

void SusResponse::validate() const {
  if (items.size() != kSusItems)
    throw ValidationError("SUS response needs 10 items, got " + std::to_string(items.size()));
  for (std::size_t i = 0; i < items.size(); ++i)
    if (items[i] < 1 || items[i] > 5)
      throw ValidationError("SUS item " + std::to_string(i + 1) + " rating " + std::to_string(items[i]) +
                            " is outside 1..5");
}

double score_sus(const SusResponse& r) {
  r.validate();
  int sum = 0;
  for (std::size_t i = 0; i < kSusItems; ++i) sum += i % 2 == 0 ? r.items[i] - 1 : 5 - r.items[i];
  return 2.5 * sum;
}

SessionScoreMatrix SessionScoreMatrix::from_rows(const std::vector<std::vector<double>>& rows) {
  SessionScoreMatrix m;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    m.participants.push_back("p" + std::to_string(i + 1));
    m.scores.emplace_back(rows[i].begin(), rows[i].end());
  }
  return m;
}

IccResult icc_1k(const SessionScoreMatrix& m) {
  if (m.participants.size() != m.scores.size())
    throw ValidationError("score matrix has " + std::to_string(m.scores.size()) + " rows for " +
                          std::to_string(m.participants.size()) + " participants");
  IccResult out;
  std::size_t k = 0;
  for (const auto& row : m.scores) k = std::max(k, row.size());

  std::vector<std::vector<double>> complete;
  for (std::size_t i = 0; i < m.scores.size(); ++i) {
    const auto& row = m.scores[i];
    const bool full = row.size() == k && std::all_of(row.begin(), row.end(), [](const auto& v) {
                        return v.has_value() && std::isfinite(*v);
                      });
    if (!full) {
      out.dropped.push_back(m.participants[i]);
      warn("ICC: dropping participant " + m.participants[i] + " with a missing session");
      continue;
    }
    std::vector<double> r;
    for (const auto& v : row) r.push_back(*v);
    complete.push_back(std::move(r));
  }
  const std::size_t n = complete.size();
  if (n < 2 || k < 2)
    throw ValidationError("ICC needs at least 2 complete participants and 2 sessions, got " + std::to_string(n) +
                          " x " + std::to_string(k));

  double grand = 0.0;
  std::vector<double> means(n);
  for (std::size_t i = 0; i < n; ++i) {
    means[i] = std::accumulate(complete[i].begin(), complete[i].end(), 0.0) / static_cast<double>(k);
    grand += means[i];
  }
  grand /= static_cast<double>(n);
  double ssb = 0.0, ssw = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    ssb += (means[i] - grand) * (means[i] - grand);
    for (double v : complete[i]) ssw += (v - means[i]) * (v - means[i]);
  }
  const double dn = static_cast<double>(n), dk = static_cast<double>(k);
  out.msb = dk * ssb / (dn - 1.0);
  out.msw = ssw / (dn * (dk - 1.0));
  out.n = n;
  out.k = k;
  if (!(out.msb > 0.0)) throw DegenerateError("ICC undefined: no between-participant variance");
  out.icc = (out.msb - out.msw) / out.msb;
  if (out.msw > 0.0) {
    out.f = out.msb / out.msw;
    const boost::math::fisher_f dist(dn - 1.0, dn * (dk - 1.0));
    out.p = boost::math::cdf(boost::math::complement(dist, out.f));
  } else {
    out.f = std::numeric_limits<double>::infinity();
    out.p = 0.0;
  }
  return out;
}

IccResult icc_1k(const std::vector<std::vector<double>>& rows) {
  return icc_1k(SessionScoreMatrix::from_rows(rows));
}

std::vector<double> midranks(std::span<const double> v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) ranks[idx[t]] = r;
    i = j + 1;
  }
  return ranks;
}

namespace {

void check_pair(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size())
    throw ValidationError("correlation inputs differ in length: " + std::to_string(x.size()) + " vs " +
                          std::to_string(y.size()));
  if (x.size() < 3) throw ValidationError("correlation needs at least 3 pairs");
  for (std::size_t i = 0; i < x.size(); ++i)
    if (!std::isfinite(x[i]) || !std::isfinite(y[i])) throw ValidationError("correlation input is not finite");
}

double raw_pearson(std::span<const double> x, std::span<const double> y) {
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (!(sxx > 0.0) || !(syy > 0.0)) throw DegenerateError("correlation undefined: an input has zero variance");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double t_pvalue(double r, std::size_t n) {
  if (std::abs(r) >= 1.0) return 0.0;
  const double df = static_cast<double>(n) - 2.0;
  const double t = r * std::sqrt(df / (1.0 - r * r));
  const boost::math::students_t dist(df);
  return std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t))));
}

double permutation_pvalue(std::span<const double> x, std::span<const double> y, double r) {
  if (x.size() > kPermutationExactMax)
    throw ValidationError("exact permutation p is limited to n <= " + std::to_string(kPermutationExactMax));
  std::vector<double> perm(y.begin(), y.end());
  std::sort(perm.begin(), perm.end());
  // Relative slack keeps permutations that tie |r| from being lost to rounding.
  const double bar = std::abs(r) - 1e-12;
  std::size_t hits = 0, total = 0;
  do {
    ++total;
    if (std::abs(raw_pearson(x, perm)) >= bar) ++hits;
  } while (std::next_permutation(perm.begin(), perm.end()));
  // Distinct orderings all carry the same tie multiplicity, so the ratio is exact.
  return static_cast<double>(hits) / static_cast<double>(total);
}

}  // namespace

Correlation pearson(std::span<const double> x, std::span<const double> y, bool exact) {
  check_pair(x, y);
  Correlation c;
  c.n = x.size();
  c.r = raw_pearson(x, y);
  c.exact = exact;
  c.p = exact ? permutation_pvalue(x, y, c.r) : t_pvalue(c.r, c.n);
  return c;
}

Correlation spearman(std::span<const double> x, std::span<const double> y, bool exact) {
  check_pair(x, y);
  const auto rx = midranks(x);
  const auto ry = midranks(y);
  return pearson(rx, ry, exact);
}

std::vector<std::pair<double, double>> signed_rank_null(std::span<const double> ranks) {
  // Midranks are multiples of 1/2, so doubled ranks index an integer table.
  std::vector<int> doubled;
  int total = 0;
  for (double r : ranks) {
    const int d = static_cast<int>(std::lround(2.0 * r));
    if (std::abs(2.0 * r - d) > 1e-9 || d <= 0) throw ValidationError("signed ranks must be positive half-integers");
    doubled.push_back(d);
    total += d;
  }
  std::vector<double> count(static_cast<std::size_t>(total) + 1, 0.0);
  count[0] = 1.0;
  int reach = 0;
  for (int d : doubled) {
    for (int s = reach; s >= 0; --s)
      if (count[static_cast<std::size_t>(s)] != 0.0) count[static_cast<std::size_t>(s + d)] += count[static_cast<std::size_t>(s)];
    reach += d;
  }
  const double patterns = std::ldexp(1.0, static_cast<int>(ranks.size()));
  std::vector<std::pair<double, double>> out;
  for (std::size_t s = 0; s < count.size(); ++s)
    if (count[s] != 0.0) out.emplace_back(0.5 * static_cast<double>(s), count[s] / patterns);
  return out;
}

WilcoxonResult wilcoxon_signed_rank(std::span<const double> values, double threshold) {
  std::vector<double> diffs;
  WilcoxonResult out;
  for (double v : values) {
    if (!std::isfinite(v)) throw ValidationError("Wilcoxon input is not finite");
    const double d = v - threshold;
    if (d == 0.0) {
      ++out.zeros_dropped;
      continue;
    }
    diffs.push_back(d);
  }
  if (diffs.empty()) throw DegenerateError("Wilcoxon undefined: every difference is zero");
  std::vector<double> mags;
  for (double d : diffs) mags.push_back(std::abs(d));
  const auto ranks = midranks(mags);
  for (std::size_t i = 0; i < diffs.size(); ++i)
    if (diffs[i] > 0.0) out.w += ranks[i];
  out.n = diffs.size();

  if (out.n <= kWilcoxonExactMax) {
    out.exact = true;
    double p = 0.0;
    for (const auto& [w, prob] : signed_rank_null(ranks))
      if (w >= out.w - 1e-9) p += prob;
    out.p = std::min(p, 1.0);
    return out;
  }
  out.exact = false;
  const double n = static_cast<double>(out.n);
  double tie = 0.0;
  std::vector<double> sorted = ranks;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t j = i;
    while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
    const double t = static_cast<double>(j - i);
    tie += t * t * t - t;
    i = j;
  }
  const double mean = n * (n + 1.0) / 4.0;
  const double var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie / 48.0;
  const double z = (out.w - mean - 0.5) / std::sqrt(var);
  out.p = 0.5 * std::erfc(z / std::sqrt(2.0));
  return out;
}

double cronbach_alpha(const Eigen::MatrixXd& items) {
  const auto n = items.rows();
  const auto k = items.cols();
  if (k < 2 || n < 2) throw ValidationError("Cronbach's alpha needs at least 2 subjects and 2 items");
  if (!items.allFinite()) throw ValidationError("Cronbach's alpha input is not finite");
  const auto sample_var = [n](const Eigen::VectorXd& v) {
    return (v.array() - v.mean()).square().sum() / static_cast<double>(n - 1);
  };
  double item_var = 0.0;
  for (Eigen::Index j = 0; j < k; ++j) item_var += sample_var(items.col(j));
  const double total_var = sample_var(items.rowwise().sum());
  if (!(total_var > 0.0)) throw DegenerateError("Cronbach's alpha undefined: total score has zero variance");
  const double dk = static_cast<double>(k);
  return dk / (dk - 1.0) * (1.0 - item_var / total_var);
}

namespace {

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    const auto b = cell.find_first_not_of(" \t");
    const auto e = cell.find_last_not_of(" \t");
    out.push_back(b == std::string::npos ? std::string() : cell.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double number(const std::string& s, std::size_t line, const std::string& what) {
  double v = 0.0;
  const auto* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (s.empty() || ec != std::errc() || ptr != end || !std::isfinite(v))
    throw IngestError(what + " '" + s + "' is not a number", line);
  return v;
}

int integer(const std::string& s, std::size_t line, const std::string& what) {
  int v = 0;
  const auto* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (s.empty() || ec != std::errc() || ptr != end) throw IngestError(what + " '" + s + "' is not an integer", line);
  return v;
}

}  // namespace

std::size_t CsvTable::column(const std::string& name) const {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw IngestError("missing column '" + name + "'", 1);
  return static_cast<std::size_t>(it - header.begin());
}

CsvTable parse_csv(std::istream& in) {
  CsvTable t;
  std::string line;
  std::size_t no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    auto cells = split(line);
    if (!have_header) {
      t.header = std::move(cells);
      have_header = true;
      continue;
    }
    if (cells.size() != t.header.size())
      throw IngestError("expected " + std::to_string(t.header.size()) + " columns, got " + std::to_string(cells.size()),
                        no);
    t.rows.push_back(std::move(cells));
    t.lines.push_back(no);
  }
  if (!have_header) throw IngestError("empty CSV: no header row", no == 0 ? 1 : no);
  return t;
}

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path);
  return parse_csv(in);
}

AautRecord parse_aaut_csv(std::istream& in) {
  const auto t = parse_csv(in);
  const auto sc = t.column("spontaneous");
  const auto cc = t.column("constrained");
  const auto qit = std::find(t.header.begin(), t.header.end(), "qom");
  AautRecord rec;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    AautTask task;
    task.spontaneous = integer(t.rows[i][sc], t.lines[i], "spontaneous AOU");
    task.constrained = integer(t.rows[i][cc], t.lines[i], "constrained AOU");
    if (qit != t.header.end()) {
      const auto& q = t.rows[i][static_cast<std::size_t>(qit - t.header.begin())];
      if (!q.empty()) task.qom = integer(q, t.lines[i], "QOM");
    }
    rec.tasks.push_back(task);
  }
  try {
    rec.validate();
  } catch (const ValidationError& e) {
    throw IngestError(e.what(), t.lines.empty() ? 1 : t.lines.back());
  }
  return rec;
}

std::vector<SusResponse> parse_sus_csv(std::istream& in) {
  const auto t = parse_csv(in);
  std::vector<std::size_t> cols;
  for (std::size_t i = 1; i <= kSusItems; ++i) cols.push_back(t.column("item" + std::to_string(i)));
  std::vector<SusResponse> out;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    SusResponse resp;
    for (auto c : cols) resp.items.push_back(integer(t.rows[r][c], t.lines[r], "SUS rating"));
    try {
      resp.validate();
    } catch (const ValidationError& e) {
      throw IngestError(e.what(), t.lines[r]);
    }
    out.push_back(std::move(resp));
  }
  return out;
}

SessionScoreMatrix parse_score_matrix_csv(std::istream& in) {
  const auto t = parse_csv(in);
  const auto pc = t.column("participant");
  SessionScoreMatrix m;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    m.participants.push_back(t.rows[r][pc]);
    std::vector<std::optional<double>> row;
    for (std::size_t c = 0; c < t.header.size(); ++c) {
      if (c == pc) continue;
      const auto& cell = t.rows[r][c];
      if (cell.empty())
        row.emplace_back();
      else
        row.emplace_back(number(cell, t.lines[r], "score"));
    }
    m.scores.push_back(std::move(row));
  }
  return m;
}

}  // namespace bartr
