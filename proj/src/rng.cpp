#include "amtgan/rng.hpp"

#include <sstream>

#include "amtgan/error.hpp"

namespace amtgan {

std::string Rng::state() const {
  std::ostringstream out;
  out << engine_;
  return out.str();
}

void Rng::set_state(const std::string& text) {
  std::istringstream in(text);
  std::mt19937_64 engine;
  in >> engine;
  if (in.fail()) throw IntegrityError("malformed rng state");
  engine_ = engine;
}

}  // namespace amtgan
