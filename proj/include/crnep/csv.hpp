#ifndef CRNEP_CSV_HPP
#define CRNEP_CSV_HPP

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace crnep::csv {

/// Shortest decimal text that parses back to the same double.
std::string format(double value);

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const;  // throws if absent
};

Table read(const std::filesystem::path& path);
double to_double(const std::string& field);
long long to_int(const std::string& field);

class Writer {
 public:
  Writer(const std::filesystem::path& path, const std::vector<std::string>& header);
  Writer& field(const std::string& text);
  Writer& field(double value);
  Writer& field(long long value);
  Writer& field(int value) { return field(static_cast<long long>(value)); }
  void end_row();

 private:
  std::filesystem::path path_;
  std::ofstream out_;
  bool first_ = true;
};

}  // namespace crnep::csv

#endif  // CRNEP_CSV_HPP
