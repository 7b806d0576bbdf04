#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

namespace rpmeas {

// Shortest decimal that parses back to the same double; "nan", "inf", "-inf" otherwise.
std::string format_double(double v);

// Comma-separated rows with a mandatory header. Empty cells are written as nothing.
class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header);

  CsvWriter& cell(double v);
  CsvWriter& cell(long long v);
  CsvWriter& cell(const std::string& v);
  CsvWriter& empty();
  void end_row();

 private:
  std::ofstream out_;
  std::size_t columns_;
  std::size_t filled_ = 0;
};

// Pretty-printed JSON followed by a newline.
void write_json(const std::filesystem::path& path, const nlohmann::json& doc);

}  // namespace rpmeas
