#pragma once

#include <map>
#include <string>
#include <string_view>

namespace batchprompt::detail {

// Template name -> raw template file contents.
const std::map<std::string, std::string_view>& bundled_templates();

}  // namespace batchprompt::detail
