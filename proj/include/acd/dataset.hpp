#ifndef ACD_DATASET_HPP_
#define ACD_DATASET_HPP_

#include <Eigen/Dense>

#include <stdexcept>
#include <string>
#include <vector>

#include "acd/random.hpp"

namespace acd {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// n x d table of real observations, one column per variable.
struct Dataset {
  Eigen::MatrixXd values;
  std::vector<std::string> column_names;

  Dataset() = default;
  explicit Dataset(Eigen::MatrixXd v, std::vector<std::string> names = {});

  int rows() const { return static_cast<int>(values.rows()); }
  int cols() const { return static_cast<int>(values.cols()); }

  /// Rows selected by index, names preserved.
  Dataset take_rows(const std::vector<int>& index) const;
};

struct DataSplit {
  Dataset train;
  Dataset est;
  double split_fraction = 0.8;
};

/// Random row partition: round(n * fraction) rows to train, clamped so both
/// parts are non-empty.
DataSplit split_dataset(const Dataset& data, double split_fraction, Rng& rng);

/// Comma-separated numeric table with an optional header line. The first line
/// is a header when none of its cells parse as numbers.
Dataset load_csv(const std::string& path);
Dataset parse_csv(const std::string& text, const std::string& source = "<memory>");

/// Values are written in shortest round-trip form, so load_csv(write_csv(x)) == x.
void write_csv(const std::string& path, const Dataset& data);
std::string format_csv(const Dataset& data);

/// Shortest decimal text that parses back to exactly the same double.
std::string format_double(double value);

}  // namespace acd

#endif  // ACD_DATASET_HPP_
