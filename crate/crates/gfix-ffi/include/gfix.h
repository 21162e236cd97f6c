/* C interface for the gfix adapter-compression library. */

#ifndef GFIX_H
#define GFIX_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Status codes returned by every API function.
 */
typedef enum GfixStatus {
  GFIX_STATUS_OK = 0,
  GFIX_STATUS_NULL_ARGUMENT = 1,
  GFIX_STATUS_INVALID_UTF8 = 2,
  GFIX_STATUS_IO = 3,
  GFIX_STATUS_FORMAT = 4,
  GFIX_STATUS_NUMERICAL = 5,
  GFIX_STATUS_NOT_FOUND = 6,
  GFIX_STATUS_BUFFER_TOO_SMALL = 7,
  GFIX_STATUS_PANIC = 8,
} GfixStatus;

/*
 Opaque archive handle.
 */
typedef struct GfixArchive GfixArchive;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Library version as a static NUL-terminated string.
 */
const char *gfix_version(void);

/*
 Copies the most recent error message for this thread into `buf`
 (truncating if needed) and reports the full length through `written`.

 # Safety
 `buf` must point to `cap` writable bytes; `written` may be NULL.
 */
enum GfixStatus gfix_last_error_message(char *buf, size_t cap, size_t *written);

/*
 Creates an empty archive.

 # Safety
 `out` must be a valid pointer; the handle must be freed with
 [`gfix_archive_free`].
 */
enum GfixStatus gfix_archive_create(struct GfixArchive **out);

/*
 Loads a GFXT archive from `path`.

 # Safety
 `path` is a NUL-terminated UTF-8 string; `out` must be valid.
 */
enum GfixStatus gfix_archive_open(const char *path, struct GfixArchive **out);

/*
 Releases an archive handle. NULL is a no-op.

 # Safety
 `archive` must be a handle from this library, not yet freed.
 */
void gfix_archive_free(struct GfixArchive *archive);

/*
 Writes the archive to `path` in GFXT format.

 # Safety
 `archive` must be a live handle; `path` a NUL-terminated UTF-8 string.
 */
enum GfixStatus gfix_archive_save(const struct GfixArchive *archive, const char *path);

/*
 Number of tensors in the archive.

 # Safety
 `archive` must be a live handle; `out` valid.
 */
enum GfixStatus gfix_archive_tensor_count(const struct GfixArchive *archive, size_t *out);

/*
 Copies the NUL-terminated name of tensor `index` into `buf`.

 # Safety
 `buf` must point to `cap` writable bytes.
 */
enum GfixStatus gfix_archive_tensor_name(const struct GfixArchive *archive,
                                         size_t index,
                                         char *buf,
                                         size_t cap);

/*
 Rank (number of dimensions) of the named tensor.

 # Safety
 Standard handle/pointer validity rules.
 */
enum GfixStatus gfix_archive_tensor_rank(const struct GfixArchive *archive,
                                         const char *name,
                                         size_t *out);

/*
 Copies the tensor's dimensions into `dims` (capacity `cap` entries).

 # Safety
 `dims` must point to `cap` writable u64 slots.
 */
enum GfixStatus gfix_archive_tensor_shape(const struct GfixArchive *archive,
                                          const char *name,
                                          uint64_t *dims,
                                          size_t cap);

/*
 Copies the tensor's elements (converted to f64) into `buf`.

 # Safety
 `buf` must point to `cap` writable doubles.
 */
enum GfixStatus gfix_archive_read_f64(const struct GfixArchive *archive,
                                      const char *name,
                                      double *buf,
                                      size_t cap);

/*
 Adds an f64 tensor to the archive. Fails on duplicate names and on
 shape/length mismatches.

 # Safety
 `shape` points to `rank` u64 dims; `data` points to `len` doubles.
 */
enum GfixStatus gfix_archive_add_f64(struct GfixArchive *archive,
                                     const char *name,
                                     const uint64_t *shape,
                                     size_t rank,
                                     const double *data,
                                     size_t len);

/*
 Adds an f32 tensor to the archive.

 # Safety
 `shape` points to `rank` u64 dims; `data` points to `len` floats.
 */
enum GfixStatus gfix_archive_add_f32(struct GfixArchive *archive,
                                     const char *name,
                                     const uint64_t *shape,
                                     size_t rank,
                                     const float *data,
                                     size_t len);

/*
 Builds adapters for the manifest layers of `base_path` and writes them to
 `out_path` as a GFXT archive. `manifest_json` is the manifest document
 itself, not a path.

 # Safety
 All strings are NUL-terminated UTF-8.
 */
enum GfixStatus gfix_decompose(const char *base_path,
                               const char *manifest_json,
                               const char *out_path);

/*
 Full fit: closed-form modulation fit, RD step search, entropy coding.
 Writes the GFXB stream to `out_stream_path` and, when non-NULL, a JSON
 report to `report_path`.

 # Safety
 All strings are NUL-terminated UTF-8; `report_path` may be NULL.
 */
enum GfixStatus gfix_fit(const char *base_path,
                         const char *target_path,
                         const char *manifest_json,
                         double lambda,
                         int32_t refine,
                         const char *out_stream_path,
                         const char *report_path);

/*
 Decodes a GFXB stream into a dequantized-maps GFXT archive.

 # Safety
 Strings are NUL-terminated UTF-8.
 */
enum GfixStatus gfix_decode(const char *stream_path, const char *out_maps_path);

/*
 Reconstructs weights: base + A * M * B per manifest layer.

 # Safety
 Strings are NUL-terminated UTF-8.
 */
enum GfixStatus gfix_apply(const char *base_path,
                           const char *maps_path,
                           const char *manifest_json,
                           const char *out_path);

/*
 BD-rate between two curves given as parallel rate/quality arrays.
 `higher_better` selects the quality orientation for both curves.

 # Safety
 The four array pointers must each hold the stated number of doubles.
 */
enum GfixStatus gfix_bd_rate(const double *test_rates,
                             const double *test_qualities,
                             size_t test_len,
                             const double *anchor_rates,
                             const double *anchor_qualities,
                             size_t anchor_len,
                             int32_t higher_better,
                             double *out_percent);

/*
 PSNR in dB. When the inputs are identical, `out_identical` is set to 1
 and `out_db` is left untouched (the sentinel replaces an infinity).

 # Safety
 `a` and `b` must each point to `len` doubles.
 */
enum GfixStatus gfix_psnr(const double *a,
                          const double *b,
                          size_t len,
                          double peak,
                          double *out_db,
                          int32_t *out_identical);

/*
 Squared MMD between two flattened sample sets of shape (n, dim) and
 (m, dim). Pass `bandwidth <= 0` to use the median heuristic.

 # Safety
 `x` holds n*dim doubles, `y` holds m*dim doubles.
 */
enum GfixStatus gfix_mmd2(const double *x,
                          size_t n,
                          const double *y,
                          size_t m,
                          size_t dim,
                          double bandwidth,
                          double *out);

/*
 MMD-minimizing noise level over `t_list` under the default linear
 schedule. Pass `bandwidth <= 0` for the median heuristic.

 # Safety
 `degraded` holds n_degraded*dim doubles, `reference` n_reference*dim,
 `t_list` holds t_count entries.
 */
enum GfixStatus gfix_select_stepsize(const double *degraded,
                                     size_t n_degraded,
                                     const double *reference,
                                     size_t n_reference,
                                     size_t dim,
                                     const uint64_t *t_list,
                                     size_t t_count,
                                     double bandwidth,
                                     uint64_t seed,
                                     uint64_t *out_t);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* GFIX_H */
