#pragma once

#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

namespace cl_lab {

// Shortest round-trip decimal form; "nan"/"inf" spelled out.
std::string format_double(double v);

class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header);

  template <typename... Ts>
  void row(const Ts&... values) {
    std::vector<std::string> cells;
    cells.reserve(sizeof...(Ts));
    (cells.push_back(cell(values)), ...);
    raw_row(cells);
  }

  void raw_row(const std::vector<std::string>& cells);
  const std::string& str() const { return text_; }
  std::size_t columns() const { return columns_; }

 private:
  template <typename T>
  static std::string cell(const T& v) {
    if constexpr (std::is_same_v<T, bool>) {
      return v ? "1" : "0";
    } else if constexpr (std::is_floating_point_v<T>) {
      return format_double(static_cast<double>(v));
    } else if constexpr (std::is_integral_v<T>) {
      return std::to_string(v);
    } else {
      return std::string(v);
    }
  }

  std::size_t columns_;
  std::string text_;
};

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(std::string_view name) const;  // -1 when absent
  std::vector<double> numbers(std::string_view name) const;
};

CsvTable parse_csv(const std::string& text);
CsvTable read_csv(const std::string& path);
void write_text(const std::string& path, const std::string& text);

}  // namespace cl_lab
