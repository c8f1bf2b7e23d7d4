#include "poolnet/report.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unistd.h>

namespace poolnet {

void write_text_atomic(const std::filesystem::path &file, std::string_view text) {
  if (file.has_parent_path())
    std::filesystem::create_directories(file.parent_path());
  const std::filesystem::path tmp = file.string() + ".tmp." + std::to_string(::getpid());
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os)
      throw std::runtime_error("cannot write '" + tmp.string() + "'");
    os.write(text.data(), static_cast<std::streamsize>(text.size()));
    os.flush();
    if (!os) {
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw std::runtime_error("write failed for '" + tmp.string() + "'");
    }
  }
  std::filesystem::rename(tmp, file);
}

void write_json_report(const std::filesystem::path &file, nlohmann::json report) {
  report["schema_version"] = kSchemaVersion;
  write_text_atomic(file, report.dump(2) + "\n");
}

void write_csv(const std::filesystem::path &file, const std::vector<std::string> &header,
               const std::vector<std::vector<double>> &rows) {
  std::ostringstream os;
  os.precision(17);
  os << "# schema_version: " << kSchemaVersion << "\n";
  for (std::size_t i = 0; i < header.size(); ++i)
    os << (i ? "," : "") << header[i];
  os << "\n";
  for (const auto &row : rows) {
    if (row.size() != header.size())
      throw std::invalid_argument("csv row has " + std::to_string(row.size()) + " fields, header has " +
                                  std::to_string(header.size()));
    for (std::size_t i = 0; i < row.size(); ++i)
      os << (i ? "," : "") << row[i];
    os << "\n";
  }
  write_text_atomic(file, os.str());
}

} // namespace poolnet
