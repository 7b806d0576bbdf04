#include "rpmeas/io.hpp"

#include <charconv>
#include <cmath>
#include <stdexcept>

namespace rpmeas {

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

CsvWriter::CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header)
    : out_(path, std::ios::binary), columns_(header.size()) {
  if (!out_) throw std::runtime_error("cannot write " + path.string());
  for (const auto& h : header) cell(h);
  end_row();
}

CsvWriter& CsvWriter::cell(double v) { return cell(format_double(v)); }

CsvWriter& CsvWriter::cell(long long v) { return cell(std::to_string(v)); }

CsvWriter& CsvWriter::cell(const std::string& v) {
  if (filled_ > 0) out_ << ',';
  out_ << v;
  ++filled_;
  return *this;
}

CsvWriter& CsvWriter::empty() { return cell(std::string()); }

void CsvWriter::end_row() {
  if (filled_ != columns_)
    throw std::logic_error("csv row has " + std::to_string(filled_) + " cells, header has " +
                           std::to_string(columns_));
  out_ << '\n';
  filled_ = 0;
}

void write_json(const std::filesystem::path& path, const nlohmann::json& doc) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << doc.dump(2) << '\n';
}

}  // namespace rpmeas
