#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace procuresim {

// Filesystem-level failures, kept distinct from domain validation errors so
// the CLI can map them to separate exit codes.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// %.12g formatting used for all CSV numerics; stable across runs.
std::string fmt_num(double v);

std::string csv_escape(const std::string& s);
std::vector<std::string> split_csv_line(const std::string& line);

// Replaces path-hostile characters so drug names can become directory names.
std::string sanitize_path_component(const std::string& s);

std::string read_text_file(const std::string& path);  // throws std::runtime_error
void write_text_file(const std::string& path, const std::string& content);

}  // namespace procuresim
