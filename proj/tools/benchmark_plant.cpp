// Line-protocol server for the two-state benchmark plant, for use as an
// external black-box system:  "x1 x2 u" in, "y1 y2" or "error <msg>" out.

#include <cstdio>
#include <iostream>
#include <sstream>
#include <string>

#include "fblin/system.hpp"

int main() {
  std::string line;
  while (std::getline(std::cin, line)) {
    std::istringstream is(line);
    double x1 = 0.0, x2 = 0.0, u = 0.0;
    if (!(is >> x1 >> x2 >> u)) {
      std::cout << "error malformed request" << std::endl;
      continue;
    }
    try {
      const fblin::Vector y = fblin::benchmark::step(fblin::Vector{{x1, x2}}, u);
      char buf[64];
      std::snprintf(buf, sizeof buf, "%.17g %.17g", y(0), y(1));
      std::cout << buf << std::endl;
    } catch (const fblin::Error& e) {
      std::cout << "error " << e.what() << std::endl;
    }
  }
  return 0;
}
