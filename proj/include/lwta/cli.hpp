#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "lwta/data.hpp"

namespace lwta::cli {

// Entry point shared by the executable and the tests. Exit codes: 0 success,
// 1 runtime failure, 2 usage error.
int run(int argc, char** argv, std::ostream& out, std::ostream& err);
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Accepts plain decimals and fractions such as "8/255".
double parse_number(const std::string& text);

// Data source forms:
//   idx:<images>,<labels>
//   cifar10:<dir>[,test]
//   cifar10-file:<path>
//   blobs:classes=10,n=100,dim=16,sep=0.6,noise=0.1,seed=1[,side=4]
Dataset load_data(const std::string& spec);

struct RunManifest {
  std::string command;
  std::vector<std::string> arguments;
  std::uint64_t seed = 0;
  std::string library_version;
  std::string dataset_fingerprint;
  std::string started_at;
  std::string finished_at;
};

std::string utc_timestamp();

}  // namespace lwta::cli
