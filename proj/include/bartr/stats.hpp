#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <istream>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace bartr {

inline constexpr std::size_t kAautTasks = 14;
inline constexpr std::size_t kSusItems = 10;
/// Average SUS score; the usability test asks whether a cohort sits above it.
inline constexpr double kSusThreshold = 72.6;
/// Largest sample for the exact signed-rank null distribution.
inline constexpr std::size_t kWilcoxonExactMax = 25;
/// Largest sample for the exhaustive permutation p of a correlation.
inline constexpr std::size_t kPermutationExactMax = 10;

/// One covertly observed AAUT task. AOU is 1 when the affected arm was used.
struct AautTask {
  int spontaneous = 0;
  int constrained = 0;
  std::optional<int> qom;  // 0..5, only when spontaneous AOU is 1; not scored
};

struct AautRecord {
  std::vector<AautTask> tasks;

  void validate() const;
};

/// Mean of (constrained - spontaneous) AOU over the 14 tasks.
double score_aaut(const AautRecord& rec);

/// Ratings 1..5; odd items positively worded, even items negatively.
struct SusResponse {
  std::vector<int> items;

  void validate() const;
};

double score_sus(const SusResponse& r);

/// Participants x sessions; empty cells are missing.
struct SessionScoreMatrix {
  std::vector<std::string> participants;
  std::vector<std::vector<std::optional<double>>> scores;

  static SessionScoreMatrix from_rows(const std::vector<std::vector<double>>& rows);
};

struct IccResult {
  double icc = 0.0;
  double f = 0.0;
  double p = 0.0;  // upper tail of F(n-1, n(k-1))
  double msb = 0.0;
  double msw = 0.0;
  std::size_t n = 0;
  std::size_t k = 0;
  std::vector<std::string> dropped;  // participants with a missing session
};

/// ICC(1,k), one-way random effects, average measures, over complete cases.
IccResult icc_1k(const SessionScoreMatrix& m);
IccResult icc_1k(const std::vector<std::vector<double>>& rows);

struct Correlation {
  double r = 0.0;
  double p = 0.0;  // two-sided
  std::size_t n = 0;
  bool exact = false;  // p from full permutation enumeration
};

/// Average ranks, 1-based; ties share the mean of their positions.
std::vector<double> midranks(std::span<const double> v);

/// p from t = r sqrt((n-2)/(1-r^2)) on n-2 df, or by enumerating all n!
/// pairings when `exact` (n <= 10).
Correlation pearson(std::span<const double> x, std::span<const double> y, bool exact = false);
Correlation spearman(std::span<const double> x, std::span<const double> y, bool exact = false);

struct WilcoxonResult {
  double w = 0.0;  // sum of positive-difference ranks
  double p = 0.0;  // P(W >= w) under the null
  std::size_t n = 0;
  std::size_t zeros_dropped = 0;
  bool exact = true;  // false above 25: normal approximation with tie correction
};

/// One-sample test that values sit above `threshold`.
WilcoxonResult wilcoxon_signed_rank(std::span<const double> values, double threshold);

/// Null distribution of W for the given ranks as (w, probability), ascending in w.
std::vector<std::pair<double, double>> signed_rank_null(std::span<const double> ranks);

/// Rows are subjects, columns items.
double cronbach_alpha(const Eigen::MatrixXd& items);

/// Comma-separated table with a header row. No quoting; blank lines skipped.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> lines;  // source line of each row

  std::size_t column(const std::string& name) const;
};

/// Throws IngestError on ragged rows.
CsvTable parse_csv(std::istream& in);
CsvTable read_csv(const std::string& path);

/// Columns spontaneous,constrained and optional qom; 14 rows.
AautRecord parse_aaut_csv(std::istream& in);
/// Columns item1..item10; one respondent per row.
std::vector<SusResponse> parse_sus_csv(std::istream& in);
/// Column participant, then one column per session; empty cells are missing.
SessionScoreMatrix parse_score_matrix_csv(std::istream& in);

}  // namespace bartr
