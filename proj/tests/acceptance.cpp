// Runs every acceptance criterion and prints one PASS/FAIL line each.
// Exit status 0 iff all pass.

#include <cstdlib>
#include <iostream>

#include "simplex_tf/acceptance.hpp"

int main(int argc, char** argv) {
  using namespace stf;
  unsigned threads = 1;
  if (const char* t = std::getenv("SIMPLEX_TF_THREADS")) threads = static_cast<unsigned>(std::max(1, std::atoi(t)));
  std::string suite = argc > 1 ? argv[1] : "all";
  std::vector<int> ids;
  try {
    ids = select_criteria(suite);
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return 2;
  }
  auto results = run_criteria(ids, threads, &std::cout);
  std::size_t passed = 0;
  for (const auto& r : results) passed += r.passed;
  std::cout << passed << "/" << results.size() << " criteria passed" << std::endl;
  return passed == results.size() ? 0 : 1;
}
