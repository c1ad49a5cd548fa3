#pragma once

#include <filesystem>
#include <fstream>
#include <string>

namespace testutil {

// Scratch directory, wiped per construction, under the test's CWD.
class TempDir {
  public:
    explicit TempDir(const std::string& name) : path_("tte_test_tmp/" + name) {
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    std::string file(const std::string& name) const { return path_ + "/" + name; }
    const std::string& path() const { return path_; }

  private:
    std::string path_;
};

inline std::string write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path);
    out << content;
    return path;
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace testutil
