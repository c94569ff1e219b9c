#pragma once

#include <string>
#include <string_view>

namespace qf {

// Porter (1980) suffix stripping for lowercase ASCII English words. Words
// with non-ASCII letters or of length <= 2 come back unchanged.
std::string porter_stem(std::string_view word);

// Light German suffix stripper: removes one inflectional ending
// (-ern, -em, -en, -er, -es, -e, -s) while keeping a stem of 3+ letters.
std::string german_stem(std::string_view word);

}  // namespace qf
