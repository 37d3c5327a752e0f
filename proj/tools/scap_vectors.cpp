#include "scap/error.hpp"
#include "scap/harness.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv)
{
  CLI::App app{"Write the fixed-key SCAP session as golden vector files", "scap_vectors"};
  std::string out_dir;
  app.add_option("out_dir", out_dir, "Directory to write into")->required();
  CLI11_PARSE(app, argc, argv);
  try {
    for (const auto& path : scap::harness::export_golden_vectors(out_dir)) {
      std::cout << path.string() << "\n";
    }
  } catch (const scap::Error& e) {
    std::cerr << "scap_vectors: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
