from .netpbm import quantize, read_image, write_image, read_mask, \
                    write_mask, read_pfm, write_pfm, mask_path
from .checkpoint import read_container, write_container
from .tables import read_json, write_csv, write_json
