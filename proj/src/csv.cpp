#include "crnep/csv.hpp"

#include <charconv>
#include <sstream>

#include "crnep/errors.hpp"

namespace crnep::csv {

std::string format(double value) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

int Table::column(const std::string& name) const {
  for (std::size_t c = 0; c < header.size(); ++c)
    if (header[c] == name) return static_cast<int>(c);
  throw ValidationError("CSV is missing column '" + name + "'");
}

namespace {

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r' && ch != ' ') {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

Table read(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  Table t;
  std::string line;
  if (!std::getline(in, line)) throw ValidationError(path.string() + ": empty CSV");
  t.header = split(line);
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    auto row = split(line);
    if (row.size() != t.header.size())
      throw ValidationError(path.string() + ": row has " + std::to_string(row.size()) +
                            " fields, header has " + std::to_string(t.header.size()));
    t.rows.push_back(std::move(row));
  }
  return t;
}

double to_double(const std::string& field) {
  double v = 0.0;
  auto res = std::from_chars(field.data(), field.data() + field.size(), v);
  if (res.ec != std::errc() || res.ptr != field.data() + field.size()) {
    // from_chars does not accept "inf"/"nan" spellings from other writers.
    std::istringstream ss(field);
    if (!(ss >> v)) throw ValidationError("not a number: '" + field + "'");
  }
  return v;
}

long long to_int(const std::string& field) {
  long long v = 0;
  auto res = std::from_chars(field.data(), field.data() + field.size(), v);
  if (res.ec != std::errc() || res.ptr != field.data() + field.size())
    throw ValidationError("not an integer: '" + field + "'");
  return v;
}

Writer::Writer(const std::filesystem::path& path, const std::vector<std::string>& header)
    : path_(path), out_(path) {
  if (!out_) throw IoError("cannot write " + path.string());
  for (const auto& h : header) field(h);
  end_row();
}

Writer& Writer::field(const std::string& text) {
  if (!first_) out_ << ',';
  out_ << text;
  first_ = false;
  return *this;
}

Writer& Writer::field(double value) { return field(format(value)); }

Writer& Writer::field(long long value) { return field(std::to_string(value)); }

void Writer::end_row() {
  out_ << '\n';
  first_ = true;
  if (!out_) throw IoError("write failed on " + path_.string());
}

}  // namespace crnep::csv
