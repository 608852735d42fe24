#include "ablb/sample.hpp"

#include "ablb/error.hpp"

namespace ablb {

void BinarySample::validate() const {
    const std::string where = "sample '" + id + "': ";
    require(instr_len < tokens.size(), ErrorCode::input, where + "instruction must be shorter than the sample");
    require(t_yes < instr_len && t_no < instr_len, ErrorCode::input,
            where + "candidate positions must lie inside the instruction");
    require(t_yes != t_no, ErrorCode::input, where + "candidate positions must differ");
    require(tokens[t_yes] != tokens[t_no], ErrorCode::input, where + "candidate tokens must differ");
}

}  // namespace ablb
