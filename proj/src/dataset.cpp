#include "acd/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace acd {

Dataset::Dataset(Eigen::MatrixXd v, std::vector<std::string> names)
    : values(std::move(v)), column_names(std::move(names)) {
  if (!column_names.empty() && static_cast<int>(column_names.size()) != cols()) {
    throw DataError("dataset has " + std::to_string(cols()) + " columns but " +
                    std::to_string(column_names.size()) + " names");
  }
  if (!values.allFinite()) throw DataError("dataset contains non-finite values");
}

Dataset Dataset::take_rows(const std::vector<int>& index) const {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(index.size()), values.cols());
  for (std::size_t r = 0; r < index.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = values.row(index[r]);
  Dataset d;
  d.values = std::move(out);
  d.column_names = column_names;
  return d;
}

DataSplit split_dataset(const Dataset& data, double split_fraction, Rng& rng) {
  const int n = data.rows();
  if (n < 2) throw DataError("cannot split a dataset with fewer than 2 rows");
  if (!(split_fraction > 0.0 && split_fraction < 1.0)) {
    throw DataError("split fraction must lie strictly between 0 and 1");
  }
  const int n_train = std::clamp(static_cast<int>(std::lround(n * split_fraction)), 1, n - 1);

  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  // Fisher-Yates driven directly by the engine so the partition does not
  // depend on the standard library's shuffle implementation.
  for (int i = n - 1; i > 0; --i) {
    const auto j = static_cast<int>(rng() % static_cast<std::uint64_t>(i + 1));
    std::swap(order[i], order[j]);
  }
  std::vector<int> train(order.begin(), order.begin() + n_train);
  std::vector<int> est(order.begin() + n_train, order.end());
  std::sort(train.begin(), train.end());
  std::sort(est.begin(), est.end());
  return DataSplit{data.take_rows(train), data.take_rows(est), split_fraction};
}

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return {};
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) out.push_back(trim(field));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

bool parse_number(const std::string& text, double& value) {
  if (text.empty()) return false;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  if (*first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, value);
  return ec == std::errc() && ptr == last && std::isfinite(value);
}

}  // namespace

Dataset parse_csv(const std::string& text, const std::string& source) {
  std::vector<std::vector<std::string>> lines;
  std::vector<int> line_numbers;
  {
    std::istringstream in(text);
    std::string line;
    int number = 0;
    while (std::getline(in, line)) {
      ++number;
      if (trim(line).empty()) continue;
      lines.push_back(split_fields(trim(line)));
      line_numbers.push_back(number);
    }
  }
  if (lines.empty()) throw DataError(source + ": empty file");

  std::vector<std::string> names;
  std::size_t first_data = 0;
  const auto& head = lines.front();
  const bool numeric_head = std::all_of(head.begin(), head.end(), [](const std::string& f) {
    double v = 0;
    return parse_number(f, v);
  });
  const bool any_numeric = std::any_of(head.begin(), head.end(), [](const std::string& f) {
    double v = 0;
    return parse_number(f, v);
  });
  if (!numeric_head && !any_numeric) {
    names = head;
    first_data = 1;
  }
  const std::size_t width = head.size();
  if (first_data == lines.size()) throw DataError(source + ": header present but no data rows");

  Eigen::MatrixXd values(static_cast<Eigen::Index>(lines.size() - first_data),
                         static_cast<Eigen::Index>(width));
  for (std::size_t r = first_data; r < lines.size(); ++r) {
    const auto& fields = lines[r];
    if (fields.size() != width) {
      throw DataError(source + ": ragged row at line " + std::to_string(line_numbers[r]) +
                      " (expected " + std::to_string(width) + " fields, found " +
                      std::to_string(fields.size()) + ")");
    }
    for (std::size_t c = 0; c < width; ++c) {
      double v = 0;
      if (!parse_number(fields[c], v)) {
        throw DataError(source + ": non-numeric cell '" + fields[c] + "' at line " +
                        std::to_string(line_numbers[r]) + ", column " + std::to_string(c + 1));
      }
      values(static_cast<Eigen::Index>(r - first_data), static_cast<Eigen::Index>(c)) = v;
    }
  }
  return Dataset(std::move(values), std::move(names));
}

Dataset load_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_csv(buffer.str(), path);
}

std::string format_double(double value) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, ptr);
}

std::string format_csv(const Dataset& data) {
  std::string out;
  if (!data.column_names.empty()) {
    for (int c = 0; c < data.cols(); ++c) {
      if (c > 0) out += ',';
      out += data.column_names[static_cast<std::size_t>(c)];
    }
    out += '\n';
  }
  for (int r = 0; r < data.rows(); ++r) {
    for (int c = 0; c < data.cols(); ++c) {
      if (c > 0) out += ',';
      out += format_double(data.values(r, c));
    }
    out += '\n';
  }
  return out;
}

void write_csv(const std::string& path, const Dataset& data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  out << format_csv(data);
}

}  // namespace acd
